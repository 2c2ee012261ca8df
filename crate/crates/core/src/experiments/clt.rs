//! Asymptotic-normality diagnostics for randomized diagonal estimation on
//! generalized ridge Jacobians `J̃ = X(XᵀX + G)⁻¹Xᵀ` with elliptical data
//! `X = T^{1/2} Z Σ^{1/2}`: the standardized errors
//! `(μᵢ − J̃ᵢᵢ)·(1 + tᵢη)/√(tᵢν/m)` should be standard normal and
//! uncorrelated across adjacent indices.

use crate::linops::LdlFactor;
use ndarray::{Array1, Array2, Axis};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Geometry of the diagnostic problem: row scales t, feature scales σ², and
/// ridge block G = g·I.
#[derive(Debug, Clone)]
pub struct CltSetup {
    pub n: usize,
    pub p: usize,
    /// Per-row variance multipliers t_i.
    pub t: Array1<f64>,
    /// Diagonal of Σ.
    pub sigma_diag: Array1<f64>,
    /// G = ridge_scale · I.
    pub ridge_scale: f64,
}

impl CltSetup {
    /// The diagnostic configuration used throughout: √t_i cycling through
    /// {1,2,3,4} and σ_j through {1,2}, both in equal proportion, with
    /// G = n·I.
    pub fn standard(n: usize, p: usize) -> Self {
        let t = Array1::from_shape_fn(n, |i| {
            let root = (i % 4 + 1) as f64;
            root * root
        });
        let sigma_diag = Array1::from_shape_fn(p, |j| {
            let s = (j % 2 + 1) as f64;
            s * s
        });
        Self { n, p, t, sigma_diag, ridge_scale: n as f64 }
    }
}

#[derive(Debug, Clone)]
pub struct CltDiagnostics {
    /// η = tr[Σ (XᵀX + G)⁻¹]
    pub eta: f64,
    /// ν = tr[Σ (XᵀX + G)⁻¹ XᵀX (XᵀX + G)⁻¹]
    pub nu: f64,
    /// Standardized errors pooled over elements and trials (m-probe means).
    pub z_mean: f64,
    pub z_var: f64,
    /// Pearson correlation of adjacent single-probe z-score pairs.
    pub adjacent_correlation: f64,
    pub trials: usize,
    pub m: usize,
}

/// Dense realization of one diagnostic dataset: X, J̃ diag, J̃ itself, η, ν.
pub struct CltProblem {
    pub x: Array2<f64>,
    pub jac: Array2<f64>,
    pub diag: Array1<f64>,
    pub eta: f64,
    pub nu: f64,
    pub setup: CltSetup,
}

impl CltProblem {
    /// Draw X with Rademacher Z entries and build all dense quantities.
    pub fn generate(setup: &CltSetup, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, p) = (setup.n, setup.p);
        let mut x = Array2::<f64>::zeros((n, p));
        for i in 0..n {
            let ti = setup.t[i].sqrt();
            for j in 0..p {
                let z: f64 = if rng.random::<bool>() { 1.0 } else { -1.0 };
                x[[i, j]] = ti * z * setup.sigma_diag[j].sqrt();
            }
        }

        let mut gram = x.t().dot(&x);
        for j in 0..p {
            gram[[j, j]] += setup.ridge_scale;
        }
        let factor = LdlFactor::new(&gram).expect("ridge gram is SPD");

        // η and ν from columns of (XᵀX + G)⁻¹.
        let mut eta = 0.0;
        let mut nu = 0.0;
        let mut inv_xt = Array2::<f64>::zeros((p, n));
        for j in 0..p {
            let mut e = Array1::<f64>::zeros(p);
            e[j] = 1.0;
            let col = factor.solve(e.view());
            eta += setup.sigma_diag[j] * col[j];
            let w = x.dot(&col);
            nu += setup.sigma_diag[j] * w.dot(&w);
        }
        for i in 0..n {
            let sol = factor.solve(x.row(i).to_owned().view());
            inv_xt.column_mut(i).assign(&sol);
        }
        let jac = x.dot(&inv_xt);
        let diag = jac.diag().to_owned();
        Self { x, jac, diag, eta, nu, setup: setup.clone() }
    }

    /// z-score normalization factor for element i at probe count m.
    fn z_factor(&self, i: usize, m: usize) -> f64 {
        let ti = self.setup.t[i];
        (1.0 + ti * self.eta) / (ti * self.nu / m as f64).sqrt()
    }
}

/// Run `trials` independent probe draws on one fixed dataset and pool the
/// standardized errors.
pub fn clt_diagnostics(problem: &CltProblem, m: usize, trials: usize, seed: u64) -> CltDiagnostics {
    let n = problem.setup.n;
    let mut z_sum = 0.0;
    let mut z_sq = 0.0;
    let mut count = 0usize;

    // Adjacent-pair accumulators over single-probe z-scores.
    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut pairs = 0usize;

    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial as u64 + 1);
        let w = Array2::from_shape_fn((n, m), |_| {
            if rng.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        });
        let jw = problem.jac.dot(&w);
        let d = &jw * &w;
        let mu = d.mean_axis(Axis(1)).unwrap();
        for i in 0..n {
            let z = (mu[i] - problem.diag[i]) * problem.z_factor(i, m);
            z_sum += z;
            z_sq += z * z;
            count += 1;
        }
        // Single-probe z-scores from the first column.
        let col = d.column(0);
        let z1: Vec<f64> =
            (0..n).map(|i| (col[i] - problem.diag[i]) * problem.z_factor(i, 1)).collect();
        for i in 0..n - 1 {
            let (a, b) = (z1[i], z1[i + 1]);
            sa += a;
            sb += b;
            saa += a * a;
            sbb += b * b;
            sab += a * b;
            pairs += 1;
        }
    }

    let z_mean = z_sum / count as f64;
    let z_var = z_sq / count as f64 - z_mean * z_mean;
    let np = pairs as f64;
    let cov = sab / np - (sa / np) * (sb / np);
    let va = saa / np - (sa / np) * (sa / np);
    let vb = sbb / np - (sb / np) * (sb / np);
    let adjacent_correlation = cov / (va * vb).sqrt();

    CltDiagnostics { eta: problem.eta, nu: problem.nu, z_mean, z_var, adjacent_correlation, trials, m }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::eigh;

    #[test]
    fn eta_nu_match_eigendecomposition_route() {
        let setup = CltSetup::standard(60, 45);
        let problem = CltProblem::generate(&setup, 3);

        // Second route: eigendecomposition of M = XᵀX + G. With G = g·I,
        // XᵀX = M − gI commutes with M, so
        // tr[Σ f(M)] = Σ_k (q_kᵀ Σ q_k) f(λ_k) with f(λ) = 1/λ for η and
        // f(λ) = (λ − g)/λ² for ν.
        let mut gram = problem.x.t().dot(&problem.x);
        for j in 0..setup.p {
            gram[[j, j]] += setup.ridge_scale;
        }
        let (vals, vecs) = eigh(&gram);
        let sigma = Array2::from_diag(&setup.sigma_diag);
        let mut eta2 = 0.0;
        let mut nu2 = 0.0;
        for k in 0..setup.p {
            let q = vecs.column(k).to_owned();
            let sq = q.dot(&sigma.dot(&q));
            eta2 += sq / vals[k];
            nu2 += sq * (vals[k] - setup.ridge_scale) / (vals[k] * vals[k]);
        }
        assert!((problem.eta - eta2).abs() < 1e-10 * problem.eta.abs().max(1.0));
        assert!((problem.nu - nu2).abs() < 1e-10 * problem.nu.abs().max(1.0));
    }

    #[test]
    fn z_scores_standardize_on_small_problem() {
        // Loose bands at reduced size; the paper-scale bands are enforced in
        // the acceptance suite.
        let setup = CltSetup::standard(80, 60);
        let problem = CltProblem::generate(&setup, 7);
        let diag = clt_diagnostics(&problem, 10, 300, 11);
        assert!(diag.z_mean.abs() < 0.1, "z mean {}", diag.z_mean);
        assert!((diag.z_var - 1.0).abs() < 0.25, "z var {}", diag.z_var);
        assert!(diag.adjacent_correlation.abs() < 0.12, "corr {}", diag.adjacent_correlation);
    }

    #[test]
    fn variance_shrinks_like_one_over_m() {
        let setup = CltSetup::standard(60, 45);
        let problem = CltProblem::generate(&setup, 13);
        // z-scores already normalize by 1/m; raw error variance should scale.
        let d1 = clt_diagnostics(&problem, 4, 400, 17);
        let d4 = clt_diagnostics(&problem, 16, 400, 19);
        // Both z variances should be near 1 (the 1/m scaling is absorbed).
        let ratio = d1.z_var / d4.z_var;
        assert!(ratio > 0.8 && ratio < 1.25, "ratio {ratio}");
    }
}
