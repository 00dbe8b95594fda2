use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dispersal::{DispersalKernel, Family};
use crate::error::{Error, Result};
use crate::hierarchy::{AliasingPolicy, Representation, SolverSettings, TorusGrid};
use crate::markspace::{MarkSpace, MutationKernel};
use crate::model::{ContactModel, ImmigrationRate};
use crate::simulator::SimParams;

/// Smallest box side, in dispersal standard deviations.
pub const MIN_SIDE_IN_STD: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Stationary,
    Cauchy,
    Simulate,
    Compare,
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stationary" => Ok(Self::Stationary),
            "cauchy" => Ok(Self::Cauchy),
            "simulate" => Ok(Self::Simulate),
            "compare" => Ok(Self::Compare),
            other => Err(Error::invalid(
                "experiment",
                format!("unknown experiment {other:?}; expected stationary, cauchy, simulate or compare"),
            )),
        }
    }
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Self::Stationary => "stationary",
            Self::Cauchy => "cauchy",
            Self::Simulate => "simulate",
            Self::Compare => "compare",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DispersalConfig {
    Gaussian {
        /// Shorthand for `covariance = variance * I`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        variance: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        covariance: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mean: Option<Vec<f64>>,
    },
    UniformBall {
        radius: f64,
    },
    UniformBox {
        half_widths: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarksConfig {
    pub labels: Vec<String>,
    pub weights: Vec<f64>,
    /// Rows of the raw mutation kernel `Q(s, s')`.
    pub kernel: Vec<Vec<f64>>,
}

impl Default for MarksConfig {
    fn default() -> Self {
        Self {
            labels: vec!["0".into()],
            weights: vec![1.0],
            kernel: vec![vec![1.0]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub dim: usize,
    pub side: f64,
    /// Raw contact intensity; the effective value is `kappa * r`.
    pub kappa: f64,
    pub immigration: Vec<f64>,
    pub dispersal: DispersalConfig,
    #[serde(default)]
    pub marks: MarksConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    #[default]
    Zero,
    /// `k^(n) = initial_value^n`.
    Constant,
    /// CHK1 files listed in `initial_files`, one per order.
    File,
}

fn default_grid_points() -> usize {
    64
}
fn default_n_max() -> usize {
    2
}
fn default_tolerance() -> f64 {
    1e-12
}
fn default_horizon() -> f64 {
    20.0
}
fn default_neumann_budget() -> usize {
    100_000
}
fn default_memory_budget() -> usize {
    50_000_000
}
fn default_representation() -> Representation {
    Representation::Difference
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_representation")]
    pub representation: Representation,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub aliasing: AliasingPolicy,
    #[serde(default = "default_neumann_budget")]
    pub neumann_budget: usize,
    #[serde(default = "default_memory_budget")]
    pub memory_budget: usize,
    /// Cauchy horizon.
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default)]
    pub initial: InitialKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub initial_files: Vec<PathBuf>,
    /// Separations for the factorization report; defaults to `0, L/8, L/4, L/2`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub factorization_radii: Vec<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        toml::from_str("").expect("solver defaults")
    }
}

fn default_seed() -> u64 {
    1
}
fn default_sim_horizon() -> f64 {
    200.0
}
fn default_burn_in() -> f64 {
    20.0
}
fn default_replicas() -> usize {
    8
}
fn default_cap() -> usize {
    1_000_000
}
fn default_snapshot() -> f64 {
    1.0
}
fn default_batches() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_sim_horizon")]
    pub horizon: f64,
    #[serde(default = "default_burn_in")]
    pub burn_in: f64,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default = "default_cap")]
    pub population_cap: usize,
    /// Defaults to a tenth of the dispersal standard deviation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_width: Option<f64>,
    /// Defaults to `L/2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_radius: Option<f64>,
    #[serde(default = "default_snapshot")]
    pub snapshot_interval: f64,
    #[serde(default = "default_batches")]
    pub batches: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        toml::from_str("").expect("simulation defaults")
    }
}

fn default_kappa_offset() -> f64 {
    0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    /// Family-wise two-sided level; defaults to the 3 sigma level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Added to the effective kappa of the simulator only (negative control).
    #[serde(default = "default_kappa_offset")]
    pub kappa_offset: f64,
    /// Grid points for the pair-function reference; defaults to the
    /// smallest power of two with spacing at most a quarter bin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        toml::from_str("").expect("compare defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub model: ModelConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub compare: CompareConfig,
}

/// Prefixes an invalid-parameter field with `prefix` unless it already names a block.
fn at(prefix: &str, err: Error) -> Error {
    match err {
        Error::InvalidParameter { field, reason }
            if !["model.", "solver.", "simulation.", "compare."]
                .iter()
                .any(|b| field.starts_with(b)) =>
        {
            Error::InvalidParameter {
                field: format!("{prefix}.{field}"),
                reason,
            }
        }
        Error::DimensionMismatch { expected, got } => Error::InvalidParameter {
            field: prefix.to_string(),
            reason: format!("length mismatch: expected {expected}, got {got}"),
        },
        other => other,
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        // initial-data files are relative to the config file
        if let Some(dir) = path.parent() {
            for f in &mut cfg.solver.initial_files {
                if f.is_relative() {
                    *f = dir.join(&*f);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn dispersal(&self) -> Result<DispersalKernel> {
        let d = self.model.dim;
        let family = match &self.model.dispersal {
            DispersalConfig::Gaussian {
                variance,
                covariance,
                mean,
            } => {
                let covariance = match (variance, covariance) {
                    (Some(v), None) => (0..d)
                        .map(|i| (0..d).map(|j| if i == j { *v } else { 0.0 }).collect())
                        .collect(),
                    (None, Some(c)) => c.clone(),
                    _ => {
                        return Err(Error::invalid(
                            "model.dispersal",
                            "gaussian needs exactly one of variance or covariance",
                        ))
                    }
                };
                Family::Gaussian {
                    mean: mean.clone().unwrap_or_else(|| vec![0.0; d]),
                    covariance,
                }
            }
            DispersalConfig::UniformBall { radius } => Family::UniformBall { radius: *radius },
            DispersalConfig::UniformBox { half_widths } => Family::UniformBox {
                half_widths: half_widths.clone(),
            },
        };
        DispersalKernel::new(d, family).map_err(|e| at("model.dispersal", e))
    }

    /// The renormalized model; rejects critical and supercritical `kappa`.
    pub fn model(&self) -> Result<ContactModel> {
        let m = &self.model;
        let marks = MarkSpace::new(m.marks.labels.clone(), m.marks.weights.clone())
            .map_err(|e| at("model.marks", e))?;
        let kernel = MutationKernel::new(marks, m.marks.kernel.clone())
            .map_err(|e| at("model.marks.kernel", e))?;
        let immigration =
            ImmigrationRate::new(m.immigration.clone()).map_err(|e| at("model", e))?;
        if immigration.len() != kernel.len() {
            return Err(Error::invalid(
                "model.immigration",
                format!("{} rates for {} marks", immigration.len(), kernel.len()),
            ));
        }
        if !(m.kappa.is_finite() && m.kappa >= 0.0) {
            return Err(Error::invalid("model.kappa", "must be >= 0"));
        }
        ContactModel::new(kernel, m.kappa, immigration, self.dispersal()?, m.side)
            .map_err(|e| at("model", e))
    }

    pub fn grid(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.model.dim, self.model.side, self.solver.grid_points)
            .map_err(|e| at("solver", e))
    }

    pub fn solver_settings(&self) -> SolverSettings {
        SolverSettings {
            tolerance: self.solver.tolerance,
            aliasing: self.solver.aliasing,
            neumann_budget: self.solver.neumann_budget,
            memory_budget: self.solver.memory_budget,
        }
    }

    /// Simulation parameters; `kappa_offset` shifts the effective kappa.
    pub fn sim_params(&self, kappa_offset: f64) -> Result<SimParams> {
        let mut model = self.model()?;
        if kappa_offset != 0.0 {
            model = model
                .with_effective_kappa(model.kappa() + kappa_offset)
                .map_err(|e| at("compare.kappa_offset", e))?;
        }
        let s = &self.simulation;
        let mut p = SimParams::new(model, s.seed, s.horizon, s.burn_in, s.replicas);
        p.population_cap = s.population_cap;
        if let Some(w) = s.bin_width {
            p.bin_width = w;
        }
        if let Some(r) = s.max_radius {
            p.max_radius = r;
        }
        p.snapshot_interval = s.snapshot_interval;
        p.batches = s.batches;
        p.validate()?;
        Ok(p)
    }

    pub fn factorization_radii(&self) -> Vec<f64> {
        if self.solver.factorization_radii.is_empty() {
            let l = self.model.side;
            vec![0.0, l / 8.0, l / 4.0, l / 2.0]
        } else {
            self.solver.factorization_radii.clone()
        }
    }

    /// Cross-field checks; field paths name the offending entry.
    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if m.dim == 0 {
            return Err(Error::invalid("model.dim", "must be >= 1"));
        }
        if !(m.side.is_finite() && m.side > 0.0) {
            return Err(Error::invalid("model.side", "must be positive"));
        }
        let model = self.model()?;
        let std = model.dispersal().max_std();
        if m.side < MIN_SIDE_IN_STD * std {
            return Err(Error::invalid(
                "model.side",
                format!(
                    "box side {} must be at least {MIN_SIDE_IN_STD} dispersal standard deviations ({})",
                    m.side,
                    MIN_SIDE_IN_STD * std
                ),
            ));
        }
        let s = &self.solver;
        if s.n_max == 0 {
            return Err(Error::invalid("solver.n_max", "must be >= 1"));
        }
        if !(s.tolerance > 0.0) {
            return Err(Error::invalid("solver.tolerance", "must be positive"));
        }
        if s.n_max >= 2 && s.representation == Representation::MarkOnly {
            return Err(Error::invalid(
                "solver.representation",
                "orders >= 2 need difference or full",
            ));
        }
        let needs_grid = matches!(
            self.experiment,
            ExperimentKind::Stationary | ExperimentKind::Cauchy
        ) && s.n_max >= 2;
        if needs_grid {
            self.grid()?
                .check_resolution(model.dispersal())
                .map_err(|e| at("solver", e))?;
        }
        if !(s.horizon.is_finite() && s.horizon > 0.0) {
            return Err(Error::invalid("solver.horizon", "must be positive"));
        }
        if let Some(dt) = s.dt {
            let stiffness = s.n_max as f64 * (1.0 + model.kappa());
            if !(dt > 0.0 && dt * stiffness < 1.0) {
                return Err(Error::invalid(
                    "solver.dt",
                    "need 0 < dt * n_max * (1 + kappa) < 1",
                ));
            }
        }
        match s.initial {
            InitialKind::Constant if s.initial_value.is_none() => {
                return Err(Error::invalid(
                    "solver.initial_value",
                    "required for constant initial data",
                ))
            }
            InitialKind::File if s.initial_files.len() != s.n_max => {
                return Err(Error::invalid(
                    "solver.initial_files",
                    "need one file per order",
                ))
            }
            _ => {}
        }
        if s.factorization_radii
            .iter()
            .any(|r| !(r.is_finite() && *r >= 0.0))
        {
            return Err(Error::invalid(
                "solver.factorization_radii",
                "must be nonnegative",
            ));
        }
        if matches!(
            self.experiment,
            ExperimentKind::Simulate | ExperimentKind::Compare
        ) {
            self.sim_params(0.0)?;
        }
        let c = &self.compare;
        if let Some(a) = c.alpha {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::invalid("compare.alpha", "must be in (0, 1)"));
            }
        }
        if !c.kappa_offset.is_finite() {
            return Err(Error::invalid("compare.kappa_offset", "must be finite"));
        }
        if let Some(p) = c.grid_points {
            if TorusGrid::new(m.dim, m.side, p).is_err() {
                return Err(Error::invalid(
                    "compare.grid_points",
                    "must be a power of two >= 8",
                ));
            }
        }
        Ok(())
    }
}
