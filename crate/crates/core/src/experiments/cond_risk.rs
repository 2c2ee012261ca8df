//! Closed-form and quadrature oracles for the conditional risk
//! `E[φ(y, xᵀβ̂) | β̂]` of the synthetic families.

use super::synthetic::{SyntheticFamily, SyntheticSpec};
use crate::linops::eigh;
use ndarray::{Array1, Array2};
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RiskOracleError {
    #[error("no conditional-risk oracle for this family")]
    UnsupportedFamily,
}

/// Gauss–Hermite nodes and weights (physicists' convention: weight e^{−x²})
/// by Golub–Welsch on the Jacobi matrix.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jacobi = Array2::<f64>::zeros((n, n));
    for i in 1..n {
        let b = (i as f64 / 2.0).sqrt();
        jacobi[[i - 1, i]] = b;
        jacobi[[i, i - 1]] = b;
    }
    let (values, vectors) = eigh(&jacobi);
    let mu0 = std::f64::consts::PI.sqrt();
    let nodes: Vec<f64> = values.to_vec();
    let weights: Vec<f64> =
        (0..n).map(|i| mu0 * vectors[[0, i]] * vectors[[0, i]]).collect();
    (nodes, weights)
}

fn gh128() -> &'static (Vec<f64>, Vec<f64>) {
    static CACHE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    CACHE.get_or_init(|| gauss_hermite(128))
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Misclassification risk of a linear classifier on Gaussian features with
/// logistic labels: `E[σ(−sgn(Ẑ)ρZ)]` for `(Z, Ẑ)` jointly normal with the
/// covariance induced by (β*, β̂).
///
/// With Z = aU and Ẑ = bU + cV (Cholesky), the inner expectation over V is
/// a probit: `P(Ẑ > 0 | U) = Φ(bU/c)`. The sign discontinuity in Ẑ would
/// ruin a tensor quadrature, so only the smooth outer integral is left to
/// Gauss–Hermite.
pub fn logistic_misclassification_risk(
    beta_star: &Array1<f64>,
    beta_hat: &Array1<f64>,
    rho: f64,
) -> f64 {
    let s11 = beta_star.dot(beta_star);
    let s12 = beta_star.dot(beta_hat);
    let s22 = beta_hat.dot(beta_hat);
    if s22 == 0.0 {
        // Degenerate classifier: sgn(0) = 0, so the risk is σ(0) = 1/2.
        return 0.5;
    }
    let a = s11.sqrt();
    let (b, c) = if a > 0.0 {
        let b = s12 / a;
        (b, (s22 - b * b).max(0.0).sqrt())
    } else {
        (0.0, s22.sqrt())
    };
    if a == 0.0 {
        // No true signal: every decision is a coin flip against σ(0).
        return 0.5;
    }

    let sqrt2 = std::f64::consts::SQRT_2;
    let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
    if c <= 1e-14 * s22.sqrt() {
        // β̂ exactly aligned (or anti-aligned) with β*: the conditional
        // probit collapses to a step at u = 0, and by symmetry
        // E = 2 ∫_{u>0} σ(−sgn(b)·ρ·a·u) φ(u) du.
        let sgn_b = b.signum();
        let f = |u: f64| sigmoid(-sgn_b * rho * a * u) * (-0.5 * u * u).exp();
        let mut total = 0.0;
        let panels = 64;
        let hi = 14.0;
        let h = hi / panels as f64;
        // Composite Simpson per panel is plenty for this smooth decaying
        // integrand.
        for i in 0..panels {
            let lo = i as f64 * h;
            let m = lo + 0.5 * h;
            total += h / 6.0 * (f(lo) + 4.0 * f(m) + f(lo + h));
        }
        return 2.0 * total / (2.0 * std::f64::consts::PI).sqrt();
    }

    let (nodes, weights) = gh128();
    let mut total = 0.0;
    for (i, &xu) in nodes.iter().enumerate() {
        let u = sqrt2 * xu;
        let z = a * u;
        let p_pos = normal_cdf(b * u / c);
        let val = sigmoid(-rho * z) * p_pos + sigmoid(rho * z) * (1.0 - p_pos);
        total += weights[i] * val;
    }
    total * inv_sqrt_pi
}

/// Squared-error conditional risk for isotropic second-moment designs:
/// `‖β̂ − β*‖² + noise variance` (Gaussian and scaled-t data share it).
pub fn isotropic_squared_risk(beta_star: &Array1<f64>, beta_hat: &Array1<f64>, noise_var: f64) -> f64 {
    let d = beta_star - beta_hat;
    d.dot(&d) + noise_var
}

/// Squared-error conditional risk for the one-hot categorical design with
/// `blocks` blocks of `categories` levels.
pub fn categorical_squared_risk(
    beta_star: &Array1<f64>,
    beta_hat: &Array1<f64>,
    blocks: usize,
    categories: usize,
    noise_var: f64,
) -> f64 {
    let delta = beta_star - beta_hat;
    let k = categories as f64;
    let total: f64 = delta.sum();
    let mut block_sq = 0.0;
    for b in 0..blocks {
        let s: f64 = delta.iter().skip(b * categories).take(categories).sum();
        block_sq += s * s;
    }
    delta.dot(&delta) + (total * total) / k - block_sq / k + noise_var
}

/// Conditional risk of a fitted coefficient vector under the spec's data
/// distribution.
pub fn conditional_risk(
    spec: &SyntheticSpec,
    beta_star: &Array1<f64>,
    beta_hat: &Array1<f64>,
) -> Result<f64, RiskOracleError> {
    match spec.family {
        SyntheticFamily::GaussianLasso
        | SyntheticFamily::FirstDifference
        | SyntheticFamily::MultivariateT => {
            Ok(isotropic_squared_risk(beta_star, beta_hat, spec.noise_sd * spec.noise_sd))
        }
        SyntheticFamily::LogisticRidge => {
            Ok(logistic_misclassification_risk(beta_star, beta_hat, spec.logistic_scale))
        }
        SyntheticFamily::Categorical => Ok(categorical_squared_risk(
            beta_star,
            beta_hat,
            spec.blocks,
            spec.categories,
            spec.noise_sd * spec.noise_sd,
        )),
    }
}
