//! Synthetic data generators, conditional-risk oracles, asymptotic-normality
//! diagnostics, and the reproducible benchmark runner.

mod clt;
mod cond_risk;
mod runner;
mod synthetic;

pub use clt::{clt_diagnostics, CltDiagnostics, CltProblem, CltSetup};
pub use cond_risk::{
    categorical_squared_risk, conditional_risk, gauss_hermite, isotropic_squared_risk,
    logistic_misclassification_risk, RiskOracleError,
};
pub use runner::{
    run_cell, run_experiment, CellGrid, ExperimentConfig, ExperimentError, ExperimentName,
    ExperimentRow,
};
pub use synthetic::{generate, Generated, SyntheticError, SyntheticFamily, SyntheticSpec};
