use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{field}: {reason}")]
    InvalidParameter { field: String, reason: String },

    /// `kappa * r >= 1`: the model is critical or supercritical.
    #[error("kappa = {kappa} is not subcritical (effective kappa = {effective} >= 1, kappa_cr = {kappa_cr})")]
    Supercritical {
        kappa: f64,
        effective: f64,
        kappa_cr: f64,
    },

    #[error("power iteration did not converge after {iterations} iterations (last residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("wrapped density tail bound below {target:e} not reachable with truncation order <= {max_order}")]
    TailBound { target: f64, max_order: usize },

    #[error("grid too coarse: |char_fn| at the Nyquist frequency is {value:e} (limit {limit:e})")]
    Aliasing { value: f64, limit: f64 },

    #[error("representation mismatch: {0}")]
    Representation(String),

    #[error("memory budget exceeded: order {order} needs {values} values (budget {budget})")]
    MemoryBudget {
        order: usize,
        values: usize,
        budget: usize,
    },

    #[error("positivity violated in order {order}: minimum value {min:e}")]
    Positivity { order: usize, min: f64 },

    #[error("Neumann budget exceeded: {needed} terms needed, {budget} allowed")]
    NeumannBudget { needed: usize, budget: usize },

    #[error("independent solution paths disagree by {difference:e} ({context})")]
    Mismatch { context: String, difference: f64 },

    #[error("instability in order {order} at t = {time}: weighted norm {norm:e} exceeds bound {bound:e}")]
    Instability {
        order: usize,
        time: f64,
        norm: f64,
        bound: f64,
    },

    #[error("replica {replica}: population reached the cap of {cap} particles at t = {time}")]
    PopulationCap {
        replica: usize,
        cap: usize,
        time: f64,
    },

    #[error("insufficient statistics: {0}")]
    Statistics(String),

    #[error("malformed grid file: {0}")]
    Format(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by the inputs rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch { .. }
                | Error::InvalidParameter { .. }
                | Error::Supercritical { .. }
                | Error::Representation(_)
                | Error::Format(_)
                | Error::Config(_)
        )
    }
}
