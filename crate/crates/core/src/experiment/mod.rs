//! Experiment orchestration: TOML configs, the four pipelines and their reports.
//!
//! Every pipeline writes into an output directory:
//!
//! | experiment | files |
//! |---|---|
//! | `stationary` | `k1.csv`, `k{n}.csv`, `k{n}.bin`, `factorization.csv`, `growth.csv` |
//! | `cauchy` | `trajectory.csv`, `rates.csv` |
//! | `simulate` | `k1_estimate.csv`, `k2_estimate.csv`, `events.csv` |
//! | `compare` | `comparison.csv` plus the simulate and stationary `k1` files |
//!
//! plus `config.toml` (the validated config) and `manifest.toml`.

mod config;
mod pipelines;

pub use config::{
    CompareConfig, DispersalConfig, ExperimentConfig, ExperimentKind, InitialKind, MarksConfig,
    ModelConfig, SimulationConfig, SolverConfig, MIN_SIDE_IN_STD,
};
pub use pipelines::{
    compare_grid_points, params_hash, run_cauchy, run_compare, run_experiment, run_simulate,
    run_stationary, ComparisonRow, ComparisonSummary, EventSummary, GrowthSummary, Manifest,
    Outcome,
};

/// Environment variable overriding the worker-pool size.
pub const WORKERS_ENV: &str = "CONTACT_WORKBENCH_WORKERS";
