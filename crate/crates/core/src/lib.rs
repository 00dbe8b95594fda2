//! Solver and simulator for the subcritical marked contact model with
//! immigration on a periodic box.

pub mod dispersal;
pub mod error;
pub mod experiment;
pub mod hierarchy;
pub mod markspace;
pub mod model;
pub mod simulator;
pub mod stats;

pub use error::{Error, Result};
