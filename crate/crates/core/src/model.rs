use crate::dispersal::DispersalKernel;
use crate::error::{Error, Result};
use crate::markspace::{
    krein_rutman, renormalize_with, MutationKernel, SpectralData, DEFAULT_MAX_ITER,
    DEFAULT_TOLERANCE,
};

/// Per-mark immigration intensity `c(s)`; strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct ImmigrationRate(Vec<f64>);

impl ImmigrationRate {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::invalid(
                "model.immigration",
                "at least one rate is required",
            ));
        }
        if let Some(i) = rates.iter().position(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::invalid(
                format!("model.immigration[{i}]"),
                format!(
                    "immigration rate must be strictly positive, got {}",
                    rates[i]
                ),
            ));
        }
        Ok(Self(rates))
    }

    pub fn uniform(m: usize, c: f64) -> Result<Self> {
        Self::new(vec![c; m])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// The contact model after renormalization: the kernel has principal
/// eigenvalue 1 and `kappa` is the effective value in `[0, 1)`.
#[derive(Debug, Clone)]
pub struct ContactModel {
    kernel: MutationKernel,
    spectral: SpectralData,
    raw_kappa: f64,
    raw_r: f64,
    kappa: f64,
    immigration: ImmigrationRate,
    dispersal: DispersalKernel,
    side: f64,
}

impl ContactModel {
    /// Builds the model from the raw kernel and raw `kappa`, renormalizing eagerly.
    pub fn new(
        kernel: MutationKernel,
        kappa: f64,
        immigration: ImmigrationRate,
        dispersal: DispersalKernel,
        side: f64,
    ) -> Result<Self> {
        if immigration.len() != kernel.len() {
            return Err(Error::DimensionMismatch {
                expected: kernel.len(),
                got: immigration.len(),
            });
        }
        if !(side.is_finite() && side > 0.0) {
            return Err(Error::invalid(
                "model.side",
                format!("must be positive, got {side}"),
            ));
        }
        let raw = krein_rutman(&kernel, DEFAULT_TOLERANCE, DEFAULT_MAX_ITER)?;
        let (renormalized, effective) = renormalize_with(&kernel, &raw, kappa)?;
        let spectral = SpectralData {
            r: 1.0,
            kappa_cr: 1.0,
            residual: raw.residual / raw.r,
            ..raw.clone()
        };
        Ok(Self {
            kernel: renormalized,
            spectral,
            raw_kappa: kappa,
            raw_r: raw.r,
            kappa: effective,
            immigration,
            dispersal,
            side,
        })
    }

    /// Unmarked model: `S = {0}`, `Q = [[1]]`, so `kappa` is already effective.
    pub fn unmarked(kappa: f64, c: f64, dispersal: DispersalKernel, side: f64) -> Result<Self> {
        Self::new(
            MutationKernel::unmarked(),
            kappa,
            ImmigrationRate::new(vec![c])?,
            dispersal,
            side,
        )
    }

    /// Same model with a different effective `kappa` (must stay below 1).
    pub fn with_effective_kappa(&self, kappa: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&kappa) {
            return Err(Error::Supercritical {
                kappa: kappa / self.raw_r,
                effective: kappa,
                kappa_cr: 1.0 / self.raw_r,
            });
        }
        Ok(Self {
            kappa,
            raw_kappa: kappa / self.raw_r,
            ..self.clone()
        })
    }

    /// Renormalized kernel (principal eigenvalue 1).
    pub fn kernel(&self) -> &MutationKernel {
        &self.kernel
    }

    /// Spectral data of the renormalized kernel; `q` is normalized to unit mass.
    pub fn spectral(&self) -> &SpectralData {
        &self.spectral
    }

    pub fn q(&self) -> &[f64] {
        &self.spectral.q
    }

    /// Effective `kappa` in `[0, 1)`.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn raw_kappa(&self) -> f64 {
        self.raw_kappa
    }

    /// Principal eigenvalue of the kernel before renormalization.
    pub fn raw_r(&self) -> f64 {
        self.raw_r
    }

    pub fn immigration(&self) -> &ImmigrationRate {
        &self.immigration
    }

    pub fn dispersal(&self) -> &DispersalKernel {
        &self.dispersal
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn dim(&self) -> usize {
        self.dispersal.dim()
    }

    pub fn marks(&self) -> usize {
        self.kernel.len()
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.dim() as i32)
    }
}
