//! Synthetic data generators for the benchmark problems: Gaussian lasso,
//! sparse first differences, logistic ridge, scaled multivariate-t data, and
//! one-hot categorical designs.

use crate::data::{Dataset, DesignMatrix, SparseMatrix};
use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticFamily {
    GaussianLasso,
    FirstDifference,
    LogisticRidge,
    MultivariateT,
    Categorical,
}

/// Parameters of one synthetic problem instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub family: SyntheticFamily,
    pub n: usize,
    pub p: usize,
    /// Number of nonzero signal coefficients.
    pub sparsity: usize,
    /// Standard deviation of the additive noise (regression families).
    pub noise_sd: f64,
    /// Degrees of freedom ν of the scaled multivariate-t data.
    pub t_dof: f64,
    /// Categories per block (categorical family).
    pub categories: usize,
    /// Number of one-hot blocks (categorical family); p = blocks·categories.
    pub blocks: usize,
    /// Signal strength ρ of the logistic label model.
    pub logistic_scale: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn gaussian_lasso(n: usize, p: usize, seed: u64) -> Self {
        Self {
            family: SyntheticFamily::GaussianLasso,
            n,
            p,
            sparsity: p.div_ceil(10),
            noise_sd: 1.0,
            t_dof: 0.0,
            categories: 0,
            blocks: 0,
            logistic_scale: 0.0,
            seed,
        }
    }

    pub fn first_difference(n: usize, p: usize, seed: u64) -> Self {
        Self {
            family: SyntheticFamily::FirstDifference,
            sparsity: p.div_ceil(10),
            noise_sd: 0.1,
            ..Self::gaussian_lasso(n, p, seed)
        }
    }

    pub fn logistic_ridge(n: usize, p: usize, seed: u64) -> Self {
        Self {
            family: SyntheticFamily::LogisticRidge,
            sparsity: p.div_ceil(4),
            noise_sd: 0.0,
            logistic_scale: 5.0,
            ..Self::gaussian_lasso(n, p, seed)
        }
    }

    pub fn multivariate_t(n: usize, p: usize, seed: u64) -> Self {
        Self { family: SyntheticFamily::MultivariateT, t_dof: 5.0, ..Self::gaussian_lasso(n, p, seed) }
    }

    pub fn categorical(n: usize, blocks: usize, categories: usize, seed: u64) -> Self {
        let p = blocks * categories;
        Self {
            family: SyntheticFamily::Categorical,
            n,
            p,
            sparsity: p.div_ceil(10),
            noise_sd: 0.5f64.sqrt(),
            t_dof: 0.0,
            categories,
            blocks,
            logistic_scale: 0.0,
            seed,
        }
    }

    fn validate(&self) -> Result<(), SyntheticError> {
        if self.n == 0 || self.p == 0 {
            return Err(SyntheticError::InvalidSpec("n and p must be positive".into()));
        }
        if self.sparsity > self.p {
            return Err(SyntheticError::InvalidSpec("sparsity exceeds dimension".into()));
        }
        if self.family == SyntheticFamily::Categorical && self.blocks * self.categories != self.p {
            return Err(SyntheticError::InvalidSpec("categorical requires p = blocks·categories".into()));
        }
        if self.family == SyntheticFamily::MultivariateT && self.t_dof <= 4.0 {
            return Err(SyntheticError::InvalidSpec("t family needs dof > 4".into()));
        }
        Ok(())
    }
}

pub struct Generated {
    pub data: Dataset,
    pub beta_star: Array1<f64>,
    /// Row scale factors t_i (multivariate-t family), empty otherwise.
    pub row_scales: Array1<f64>,
}

fn std_normal(rng: &mut ChaCha8Rng) -> f64 {
    <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
}

/// Sparse coefficient vector: `sparsity` positions chosen without
/// replacement, values i.i.d. N(0, value_var).
fn sparse_coefficients(
    rng: &mut ChaCha8Rng,
    p: usize,
    sparsity: usize,
    value_var: f64,
) -> Array1<f64> {
    let idx = rand::seq::index::sample(rng, p, sparsity);
    let mut beta = Array1::<f64>::zeros(p);
    let sd = value_var.sqrt();
    for j in idx {
        beta[j] = std_normal(rng) * sd;
    }
    beta
}

/// Draw a data instance per the family recipe.
pub fn generate(spec: &SyntheticSpec) -> Result<Generated, SyntheticError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, p, s) = (spec.n, spec.p, spec.sparsity);

    match spec.family {
        SyntheticFamily::GaussianLasso => {
            let x = Array2::from_shape_fn((n, p), |_| std_normal(&mut rng));
            let beta = sparse_coefficients(&mut rng, p, s, 1.0 / s as f64);
            let y = x.dot(&beta)
                + Array1::from_shape_fn(n, |_| std_normal(&mut rng) * spec.noise_sd);
            Ok(Generated {
                data: Dataset::dense(x, y).unwrap(),
                beta_star: beta,
                row_scales: Array1::zeros(0),
            })
        }
        SyntheticFamily::FirstDifference => {
            let x = Array2::from_shape_fn((n, p), |_| std_normal(&mut rng));
            // β* is the cumulative sum of a sparse jump vector, so it is
            // piecewise constant with E‖β*‖² = 1.
            let jumps = sparse_coefficients(&mut rng, p, s, 2.0 / (s * p) as f64);
            let mut beta = Array1::<f64>::zeros(p);
            let mut acc = 0.0;
            for j in 0..p {
                acc += jumps[j];
                beta[j] = acc;
            }
            let y = x.dot(&beta)
                + Array1::from_shape_fn(n, |_| std_normal(&mut rng) * spec.noise_sd);
            Ok(Generated {
                data: Dataset::dense(x, y).unwrap(),
                beta_star: beta,
                row_scales: Array1::zeros(0),
            })
        }
        SyntheticFamily::LogisticRidge => {
            let x = Array2::from_shape_fn((n, p), |_| std_normal(&mut rng));
            let beta = sparse_coefficients(&mut rng, p, s, 1.0 / s as f64);
            let rho = spec.logistic_scale;
            let y = Array1::from_shape_fn(n, |i| {
                let margin = rho * x.row(i).dot(&beta);
                let prob = 1.0 / (1.0 + (-margin).exp());
                if rng.random::<f64>() < prob {
                    1.0
                } else {
                    -1.0
                }
            });
            Ok(Generated {
                data: Dataset::dense(x, y).unwrap(),
                beta_star: beta,
                row_scales: Array1::zeros(0),
            })
        }
        SyntheticFamily::MultivariateT => {
            // x_i = √t_i z_i with (ν−2)/t_i ~ χ²_ν, so E[x xᵀ] = I.
            let chi = ChiSquared::new(spec.t_dof).unwrap();
            let t = Array1::from_shape_fn(n, |_| (spec.t_dof - 2.0) / chi.sample(&mut rng));
            let mut x = Array2::from_shape_fn((n, p), |_| std_normal(&mut rng));
            for i in 0..n {
                let sc = t[i].sqrt();
                x.row_mut(i).mapv_inplace(|v| v * sc);
            }
            let beta = sparse_coefficients(&mut rng, p, s, 1.0 / s as f64);
            let y = x.dot(&beta)
                + Array1::from_shape_fn(n, |_| std_normal(&mut rng) * spec.noise_sd);
            Ok(Generated {
                data: Dataset::dense(x, y).unwrap(),
                beta_star: beta,
                row_scales: t,
            })
        }
        SyntheticFamily::Categorical => {
            let k = spec.categories;
            let d = spec.blocks;
            let scale = (k as f64).sqrt();
            let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
            for _ in 0..n {
                let mut row = Vec::with_capacity(d);
                for b in 0..d {
                    let cat = rng.random_range(0..k);
                    row.push((b * k + cat, scale));
                }
                rows.push(row);
            }
            let x = SparseMatrix::from_rows(p, rows);
            let beta = sparse_coefficients(&mut rng, p, s, 1.0 / s as f64);
            let xb = x.matvec(beta.view());
            let y = &xb + &Array1::from_shape_fn(n, |_| std_normal(&mut rng) * spec.noise_sd);
            Ok(Generated {
                data: Dataset::new(DesignMatrix::Sparse(x), y).unwrap(),
                beta_star: beta,
                row_scales: Array1::zeros(0),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_lasso_has_exact_sparsity() {
        let spec = SyntheticSpec::gaussian_lasso(100, 100, 3);
        let g = generate(&spec).unwrap();
        let nnz = g.beta_star.iter().filter(|&&b| b != 0.0).count();
        assert_eq!(nnz, 10);
        assert_eq!(g.data.n_samples(), 100);
        assert_eq!(g.data.n_features(), 100);
    }

    #[test]
    fn categorical_structure() {
        let spec = SyntheticSpec::categorical(50, 200, 10, 4);
        assert_eq!(spec.p, 2000);
        let g = generate(&spec).unwrap();
        match &g.data.x {
            DesignMatrix::Sparse(m) => {
                assert_eq!(m.ncols(), 2000);
                let scale = 10f64.sqrt();
                for i in 0..50 {
                    let entries: Vec<(usize, f64)> = m.row_entries(i).collect();
                    assert_eq!(entries.len(), 200, "each row has exactly d nonzeros");
                    for (b, &(j, v)) in entries.iter().enumerate() {
                        assert!((v - scale).abs() < 1e-15);
                        assert!(j >= b * 10 && j < (b + 1) * 10, "one entry per block");
                    }
                }
            }
            DesignMatrix::Dense(_) => panic!("categorical data must be sparse"),
        }
    }

    #[test]
    fn multivariate_t_scale_mean_is_one() {
        // E[t] = (ν−2)·E[1/χ²_ν] = 1; check within 3 SE over many draws.
        let spec = SyntheticSpec::multivariate_t(100_000, 1, 9);
        let spec = SyntheticSpec { p: 1, sparsity: 1, ..spec };
        let g = generate(&spec).unwrap();
        let t = &g.row_scales;
        let mean = t.sum() / t.len() as f64;
        let var = t.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / (t.len() as f64 - 1.0);
        let se = (var / t.len() as f64).sqrt();
        assert!((mean - 1.0).abs() <= 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn first_difference_beta_is_piecewise_constant() {
        let spec = SyntheticSpec::first_difference(50, 50, 11);
        let g = generate(&spec).unwrap();
        let jumps = (1..50).filter(|&j| g.beta_star[j] != g.beta_star[j - 1]).count();
        assert!(jumps <= 5, "at most s jumps, got {jumps}");
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = SyntheticSpec::gaussian_lasso(30, 20, 42);
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.beta_star, b.beta_star);
        assert_eq!(a.data.y, b.data.y);
    }

    #[test]
    fn logistic_labels_are_signs() {
        let spec = SyntheticSpec::logistic_ridge(200, 40, 5);
        let g = generate(&spec).unwrap();
        assert!(g.data.y.iter().all(|&v| v == 1.0 || v == -1.0));
    }
}
