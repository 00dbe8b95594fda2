//! Correlation-function hierarchy on a periodic grid.
//!
//! The stationary equations `L*_n k^(n) + f^(n) = 0` are solved order by
//! order with a Neumann series for `(-L*_n)^{-1}`; the time-dependent
//! system is integrated with an exponential-Euler scheme. Spatial
//! convolutions are diagonal in Fourier space, where the dispersal kernel
//! enters only through its characteristic function at the grid
//! frequencies. The pointwise kernel values needed by the source terms are
//! the band-limited image of those same Fourier coefficients, so both
//! routes see one and the same discrete kernel.

mod cauchy;
mod factorization;
mod grid;
mod operator;
mod solve;
#[cfg(test)]
mod tests;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ContactModel;
use operator::Spectral;

pub use cauchy::{
    constant_initial, evolve_cauchy, fit_decay_rate, zero_initial, CauchySettings, Trajectory,
};
pub use factorization::{check_factorization, shell_average, FactorizationReport};
pub use grid::{CorrelationGrid, Representation, SourceTerm, TorusGrid};
pub use solve::{
    apply_lstar, assemble_source, neumann_terms, resolvent_neumann, solve_k1, solve_k2_unmarked,
    solve_stationary, warmup_regular_spectrum, GrowthReport, StationarySolution,
};

/// `|char_fn|` at the Nyquist frequency above which a grid counts as aliased.
pub const ALIASING_LIMIT: f64 = 1e-3;

/// Values within this (relative) distance below zero are treated as roundoff.
pub const POSITIVITY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AliasingPolicy {
    #[default]
    Warn,
    Fail,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    /// Neumann truncation target: terms are added until `kappa^M / (1 - kappa) < tolerance`.
    pub tolerance: f64,
    pub aliasing: AliasingPolicy,
    pub neumann_budget: usize,
    /// Largest number of stored values allowed for a single order.
    pub memory_budget: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-12,
            aliasing: AliasingPolicy::Warn,
            neumann_budget: 100_000,
            memory_budget: 50_000_000,
        }
    }
}

/// A model discretized on a torus grid, with the kernel tables the solver needs.
#[derive(Debug)]
pub struct HierarchyProblem {
    model: ContactModel,
    grid: TorusGrid,
    settings: SolverSettings,
    spectral: Spectral,
    /// Forward-transform multiplier of a convolution with the kernel, per frequency cell.
    multipliers: Vec<Complex64>,
    /// Band-limited kernel values on the grid cells.
    kernel_values: Vec<f64>,
    weighted: Vec<f64>,
    nyquist_char: f64,
}

impl HierarchyProblem {
    pub fn new(model: ContactModel, grid: TorusGrid, settings: SolverSettings) -> Result<Self> {
        if (grid.side() - model.side()).abs() > 1e-12 * model.side() {
            return Err(Error::invalid(
                "solver.grid",
                format!(
                    "grid side {} differs from the box side {}",
                    grid.side(),
                    model.side()
                ),
            ));
        }
        grid.check_resolution(model.dispersal())?;
        if !(settings.tolerance > 0.0) {
            return Err(Error::invalid("solver.tolerance", "must be positive"));
        }

        let alpha = model.dispersal();
        let nyquist_char = (0..grid.dim())
            .map(|axis| {
                let mut p = vec![0.0; grid.dim()];
                p[axis] = grid.nyquist();
                alpha.char_fn(&p).norm()
            })
            .fold(0.0, f64::max);
        if nyquist_char > ALIASING_LIMIT {
            match settings.aliasing {
                AliasingPolicy::Fail => {
                    return Err(Error::Aliasing {
                        value: nyquist_char,
                        limit: ALIASING_LIMIT,
                    })
                }
                AliasingPolicy::Warn => log::warn!(
                    "grid with N = {} under-resolves the dispersal kernel: |char_fn| = {nyquist_char:.3e} at Nyquist",
                    grid.points()
                ),
            }
        }

        let multipliers = multiplier_table(&grid, alpha);
        let spectral = Spectral::new(grid);
        let mut data = multipliers.clone();
        spectral.transform(&mut data, grid.dim(), 1, true);
        // inverse DFT carries 1/N^d; the continuum normalization needs 1/L^d
        let scale = (grid.points() as f64 / grid.side()).powi(grid.dim() as i32);
        let kernel_values = data.iter().map(|c| c.re * scale).collect();
        let weighted = model.kernel().weighted_matrix();

        Ok(Self {
            model,
            grid,
            settings,
            spectral,
            multipliers,
            kernel_values,
            weighted,
            nyquist_char,
        })
    }

    pub fn model(&self) -> &ContactModel {
        &self.model
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    pub fn kappa(&self) -> f64 {
        self.model.kappa()
    }

    pub fn marks(&self) -> usize {
        self.model.marks()
    }

    /// `|char_fn|` at the Nyquist frequency of the grid (largest over axes).
    pub fn nyquist_char(&self) -> f64 {
        self.nyquist_char
    }

    /// The discrete dispersal kernel on the grid cells.
    pub fn kernel_values(&self) -> &[f64] {
        &self.kernel_values
    }

    /// Characteristic function seen by the solver at a frequency cell.
    pub fn grid_char_fn(&self, cell: usize) -> Complex64 {
        // the table stores alpha_hat(-p)
        self.multipliers[self.grid.neg(cell)]
    }
}

/// `alpha_hat(-p)` per frequency cell; coordinates at the Nyquist index are
/// averaged over both signs so that the table is Hermitian.
fn multiplier_table(grid: &TorusGrid, alpha: &crate::dispersal::DispersalKernel) -> Vec<Complex64> {
    let n = grid.points();
    let d = grid.dim();
    let mut coords = vec![0; d];
    (0..grid.cells())
        .map(|cell| {
            grid.coords(cell, &mut coords);
            let p: Vec<f64> = grid.frequency(cell).iter().map(|x| -x).collect();
            let nyq: Vec<usize> = (0..d).filter(|&k| coords[k] == n / 2).collect();
            let flips = 1usize << nyq.len();
            let mut sum = Complex64::new(0.0, 0.0);
            for mask in 0..flips {
                let mut q = p.clone();
                for (bit, &axis) in nyq.iter().enumerate() {
                    if mask & (1 << bit) != 0 {
                        q[axis] = -q[axis];
                    }
                }
                sum += alpha.char_fn(&q);
            }
            sum / flips as f64
        })
        .collect()
}
