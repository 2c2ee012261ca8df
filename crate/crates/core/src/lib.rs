//! Risk estimation for regularized linear models via randomized approximate
//! leave-one-out, with exact ALO and cross-validation baselines.
//!
//! The crate is organized around a small pipeline:
//!
//! 1. [`model`] fits an empirical-risk-minimization problem (lasso, elastic
//!    net, generalized ℓ1, group lasso, ridge, logistic ridge, kernel
//!    models) and records the fit's active sets.
//! 2. [`jacobian`] turns a fitted model into a Jacobian–vector-product
//!    oracle by solving equality-constrained quadratic programs, with
//!    closed-form fast paths per regularizer family.
//! 3. [`randalo`] consumes the oracle: randomized diagonal estimation with
//!    Rademacher probes, truncated-normal MMSE correction, ALO-corrected
//!    predictions, and risk-inflation debiasing, alongside exact ALO and
//!    K-fold cross-validation baselines.
//! 4. [`experiments`] provides synthetic data generators, conditional-risk
//!    oracles, and a reproducible benchmark runner.
//!
//! [`linops`] supplies the shared solver layer (CG, MINRES, LDLᵀ, KKT).

pub mod data;
pub mod experiments;
pub mod jacobian;
pub mod linops;
pub mod model;
pub mod randalo;
