//! Coordinate descent for the elastic net
//! `½‖y − Xβ‖² + (λ₂/2)‖β‖² + θ‖β‖₁`, with a working-set strategy: full
//! sweeps locate the support, restricted sweeps polish it, and the KKT
//! residual over all coordinates decides convergence.

use super::{FitConfig, ModelError, SolveStats};
use crate::data::{Dataset, DesignMatrix};
use ndarray::{Array1, Array2};

enum Columns {
    /// Transposed dense copy: row j is the j-th column of X, contiguous.
    Dense(Array2<f64>),
    Sparse(Vec<Vec<(usize, f64)>>),
}

impl Columns {
    fn from_design(x: &DesignMatrix) -> Self {
        match x {
            DesignMatrix::Dense(m) => Columns::Dense(m.t().to_owned()),
            DesignMatrix::Sparse(m) => Columns::Sparse(m.to_columns()),
        }
    }

    fn dot_residual(&self, j: usize, r: &Array1<f64>) -> f64 {
        match self {
            Columns::Dense(t) => t.row(j).dot(r),
            Columns::Sparse(cols) => cols[j].iter().map(|&(i, v)| v * r[i]).sum(),
        }
    }

    fn axpy(&self, j: usize, alpha: f64, r: &mut Array1<f64>) {
        match self {
            Columns::Dense(t) => {
                let row = t.row(j);
                for (ri, &v) in r.iter_mut().zip(row.iter()) {
                    *ri += alpha * v;
                }
            }
            Columns::Sparse(cols) => {
                for &(i, v) in &cols[j] {
                    r[i] += alpha * v;
                }
            }
        }
    }

    fn sqnorm(&self, j: usize, n: usize) -> f64 {
        match self {
            Columns::Dense(t) => {
                let row = t.row(j);
                row.dot(&row)
            }
            Columns::Sparse(cols) => {
                let _ = n;
                cols[j].iter().map(|&(_, v)| v * v).sum()
            }
        }
    }
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

pub fn fit_elastic_net(
    data: &Dataset,
    l1: f64,
    l2: f64,
    cfg: &FitConfig,
) -> Result<(Array1<f64>, SolveStats), ModelError> {
    let n = data.n_samples();
    let p = data.n_features();
    if l1 == 0.0 && l2 == 0.0 && p > n {
        return Err(ModelError::InvalidSpec(
            "unpenalized least squares with p > n is rank deficient".into(),
        ));
    }
    let cols = Columns::from_design(&data.x);
    let col_sq: Vec<f64> = (0..p).map(|j| cols.sqnorm(j, n)).collect();

    let mut beta = Array1::<f64>::zeros(p);
    let mut r = data.y.clone();

    // Gradient scale for the relative stopping test.
    let grad0 = data.x.rmatvec(data.y.view());
    let scale = grad0.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = cfg.tol * scale;

    let update = |j: usize, beta: &mut Array1<f64>, r: &mut Array1<f64>| -> f64 {
        let denom = col_sq[j] + l2;
        if denom <= 0.0 {
            return 0.0;
        }
        let z = cols.dot_residual(j, r) + col_sq[j] * beta[j];
        let new = soft_threshold(z, l1) / denom;
        let delta = new - beta[j];
        if delta != 0.0 {
            cols.axpy(j, -delta, r);
            beta[j] = new;
        }
        delta.abs()
    };

    let kkt_residual = |beta: &Array1<f64>, r: &Array1<f64>| -> f64 {
        // Smooth gradient is −Xᵀr + λ₂β.
        let mut worst = 0.0f64;
        for j in 0..p {
            let g = -cols.dot_residual(j, r) + l2 * beta[j];
            let v = if beta[j] != 0.0 {
                (g + l1 * beta[j].signum()).abs()
            } else {
                (g.abs() - l1).max(0.0)
            };
            worst = worst.max(v);
        }
        worst
    };

    let mut sweeps = 0usize;
    loop {
        // Full sweep over all coordinates.
        for j in 0..p {
            update(j, &mut beta, &mut r);
        }
        sweeps += 1;

        // Polish the current support until it stops moving.
        let support: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
        for _ in 0..50 {
            let mut max_delta = 0.0f64;
            let mut max_mag = 0.0f64;
            for &j in &support {
                max_delta = max_delta.max(update(j, &mut beta, &mut r));
                max_mag = max_mag.max(beta[j].abs());
            }
            sweeps += 1;
            if max_delta <= 1e-14 * max_mag.max(1.0) {
                break;
            }
        }

        let res = kkt_residual(&beta, &r);
        if res <= tol {
            let objective = super::objective(data, super::Loss::Squared, &elastic_reg(l1, l2), &beta);
            return Ok((
                beta,
                SolveStats { iterations: sweeps, objective, optimality_residual: res },
            ));
        }
        if sweeps >= cfg.max_iter {
            return Err(ModelError::NonConvergence { iterations: sweeps, residual: res });
        }
    }
}

fn elastic_reg(l1: f64, l2: f64) -> super::Regularizer {
    if l2 == 0.0 {
        super::Regularizer::lasso(l1)
    } else {
        super::Regularizer::elastic_net(l2, l1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{fit, FitConfig, Loss, Regularizer};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn gaussian_problem(rng: &mut ChaCha8Rng, n: usize, p: usize, s: usize) -> Dataset {
        use rand_distr::{Distribution, StandardNormal};
        let x = Array2::from_shape_fn((n, p), |_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng));
        let mut beta = Array1::<f64>::zeros(p);
        for j in 0..s {
            beta[j] = <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
                / (s as f64).sqrt();
        }
        let noise = Array1::from_shape_fn(n, |_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng));
        let y = x.dot(&beta) + noise;
        Dataset::dense(x, y).unwrap()
    }

    #[test]
    fn lasso_above_threshold_gives_null_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data = gaussian_problem(&mut rng, 30, 12, 3);
        let max_corr = data
            .x
            .rmatvec(data.y.view())
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let model = fit(
            &data,
            Loss::Squared,
            &Regularizer::lasso(max_corr * 1.001),
            &FitConfig::default(),
        )
        .unwrap();
        assert!(model.coefficients.iter().all(|&b| b == 0.0));
    }

    /// Independent FISTA oracle for the elastic net objective.
    fn fista_oracle(data: &Dataset, l1: f64, l2: f64, iters: usize) -> Array1<f64> {
        let x = data.x.to_dense();
        let n = data.n_samples();
        let p = data.n_features();
        // Lipschitz constant by power iteration on XᵀX.
        let mut v = Array1::from_elem(p, 1.0 / (p as f64).sqrt());
        let mut lip = 1.0;
        for _ in 0..200 {
            let w = x.t().dot(&x.dot(&v));
            lip = w.dot(&w).sqrt();
            if lip == 0.0 {
                break;
            }
            v = w / lip;
        }
        let step = 1.0 / (lip + l2 + 1e-12);
        let mut beta = Array1::<f64>::zeros(p);
        let mut zeta = beta.clone();
        let mut t = 1.0f64;
        for _ in 0..iters {
            let r = &x.dot(&zeta) - &data.y;
            let mut grad = x.t().dot(&r);
            grad.scaled_add(l2, &zeta);
            let cand = &zeta - &(&grad * step);
            let new_beta = cand.mapv(|z| soft_threshold(z, step * l1));
            let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            zeta = &new_beta + &((&new_beta - &beta) * ((t - 1.0) / t_new));
            beta = new_beta;
            t = t_new;
            let _ = n;
        }
        beta
    }

    #[test]
    fn lasso_objective_matches_fista_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 200;
        let data = gaussian_problem(&mut rng, n, n, n / 10);
        let lambda = (n as f64).sqrt();
        let model =
            fit(&data, Loss::Squared, &Regularizer::lasso(lambda), &FitConfig::default()).unwrap();
        let oracle_beta = fista_oracle(&data, lambda, 0.0, 4000);
        let f_cd = model.solve_stats.objective;
        let f_oracle = crate::model::objective(
            &data,
            Loss::Squared,
            &Regularizer::lasso(lambda),
            &oracle_beta,
        );
        // CD must reach at least the oracle's objective up to relative 1e-6.
        assert!(
            f_cd <= f_oracle + 1e-6 * f_oracle.abs(),
            "cd {f_cd} vs fista oracle {f_oracle}"
        );
        assert!((f_cd - f_oracle).abs() <= 1e-6 * f_oracle.abs());
    }

    #[test]
    fn elastic_net_kkt_residual_is_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let data = gaussian_problem(&mut rng, 80, 120, 10);
        let model = fit(
            &data,
            Loss::Squared,
            &Regularizer::elastic_net(0.5, 3.0),
            &FitConfig::default(),
        )
        .unwrap();
        // Verify the subgradient conditions directly.
        let r = &data.y - &data.x.matvec(model.coefficients.view());
        let g = data.x.rmatvec(r.view());
        for j in 0..data.n_features() {
            let gj = -g[j] + 0.5 * model.coefficients[j];
            if model.coefficients[j] != 0.0 {
                assert!((gj + 3.0 * model.coefficients[j].signum()).abs() < 1e-6);
            } else {
                assert!(gj.abs() <= 3.0 + 1e-6);
            }
        }
    }

    #[test]
    fn zero_variance_response_fits() {
        let x = Array2::from_shape_fn((10, 4), |(i, j)| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let y = Array1::from_elem(10, 2.0);
        let data = Dataset::dense(x, y).unwrap();
        let model =
            fit(&data, Loss::Squared, &Regularizer::lasso(1.0), &FitConfig::default()).unwrap();
        assert!(model.solve_stats.optimality_residual.is_finite());
    }
}
