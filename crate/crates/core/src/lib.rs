//! Empirical risk minimization over the linear span of a finite dictionary,
//! with the constants, bounds and Monte Carlo campaigns needed to check its
//! oracle inequalities and lower bounds numerically.

pub mod bounds;
pub mod constants;
pub mod erm;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod models;
pub mod seed;

pub use erm::{solve_erm, CoefficientVector, TieBreakPolicy};
pub use error::{Error, Result};
pub use linalg::{Matrix, PsdMatrix};
pub use models::{Design, Noise, Sample, Scenario, Target};
pub use experiments::{ExperimentConfig, Report};
