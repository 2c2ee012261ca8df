//! Smooth quadratic fits (ridge / generalized ridge) by direct factorization
//! or conjugate gradients.

use super::{FitConfig, ModelError, SolveStats};
use crate::data::{Dataset, DesignMatrix};
use crate::linops::{cg_solve_with_info, LdlFactor, SolverConfig, SymFnOp};
use crate::model::regularizer::{regularizer_hessian, ActiveSet, Regularizer};
use ndarray::{Array1, Array2};

const DENSE_LIMIT: usize = 3000;

/// Solve `(XᵀX + R) β = Xᵀy` where `R` is the Hessian of the smooth
/// regularizer.
pub fn fit_ridge(
    data: &Dataset,
    reg: &Regularizer,
    cfg: &FitConfig,
) -> Result<(Array1<f64>, SolveStats), ModelError> {
    let p = data.n_features();
    let sets: Vec<ActiveSet> = reg.terms.iter().map(|_| ActiveSet::Smooth).collect();
    let hess = regularizer_hessian(reg, Array1::zeros(p).view(), &sets, &cfg.policy)?;
    if hess.is_zero() && p > data.n_samples() {
        return Err(ModelError::InvalidSpec(
            "unpenalized least squares with p > n is rank deficient".into(),
        ));
    }
    let xty = data.x.rmatvec(data.y.view());

    let (beta, iterations) = if p <= DENSE_LIMIT {
        let xd = match &data.x {
            DesignMatrix::Dense(m) => m.clone(),
            DesignMatrix::Sparse(m) => m.to_dense(),
        };
        let mut normal: Array2<f64> = xd.t().dot(&xd);
        normal += &hess.to_dense();
        let factor = LdlFactor::new(&normal)?;
        (factor.solve(xty.view()), 1)
    } else {
        let solver_cfg = SolverConfig {
            rel_tol: (cfg.tol * 1e-2).max(1e-14),
            ..SolverConfig::default()
        };
        let op = SymFnOp::new(p, |v| {
            let xv = data.x.matvec(v);
            let mut out = data.x.rmatvec(xv.view());
            out += &hess.apply(v);
            out
        });
        let (beta, info) = cg_solve_with_info(&op, xty.view(), &solver_cfg)?;
        (beta, info.iterations)
    };

    // First-order optimality of the original objective.
    let resid_vec = {
        let pred = data.x.matvec(beta.view());
        let mut g = data.x.rmatvec((&pred - &data.y).view());
        g += &hess.apply(beta.view());
        g
    };
    let scale = xty.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let residual = resid_vec.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if residual > cfg.tol * scale * 1e3 {
        return Err(ModelError::NonConvergence { iterations, residual });
    }
    let objective = super::objective(data, super::Loss::Squared, reg, &beta);
    Ok((beta, SolveStats { iterations, objective, optimality_residual: residual }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{fit, FitConfig, Loss};
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_design_decouples() {
        // X = I: β̂ = y / (1 + λ).
        let n = 6;
        let lambda = 2.5;
        let y = array![1.0, -2.0, 0.5, 3.0, 0.0, -1.0];
        let data = Dataset::dense(Array2::eye(n), y.clone()).unwrap();
        let model =
            fit(&data, Loss::Squared, &Regularizer::ridge(lambda), &FitConfig::default()).unwrap();
        for i in 0..n {
            assert!((model.coefficients[i] - y[i] / (1.0 + lambda)).abs() < 1e-10);
        }
    }

    #[test]
    fn matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (n, p) = (40, 25);
        let x = Array2::from_shape_fn((n, p), |_| rng.random::<f64>() - 0.5);
        let y = Array1::from_shape_fn(n, |_| rng.random::<f64>() - 0.5);
        let lambda = 0.7;
        let data = Dataset::dense(x.clone(), y.clone()).unwrap();
        let model =
            fit(&data, Loss::Squared, &Regularizer::ridge(lambda), &FitConfig::default()).unwrap();

        let mut normal = x.t().dot(&x);
        for i in 0..p {
            normal[[i, i]] += lambda;
        }
        let expect = LdlFactor::new(&normal).unwrap().solve(x.t().dot(&y).view());
        assert!((&model.coefficients - &expect).mapv(f64::abs).sum() < 1e-8);
        assert!(model.solve_stats.optimality_residual < 1e-8);
    }

    #[test]
    fn unpenalized_underdetermined_rejected() {
        let x = Array2::from_shape_fn((3, 5), |(i, j)| (i + j) as f64);
        let y = array![1.0, 2.0, 3.0];
        let data = Dataset::dense(x, y).unwrap();
        let reg = Regularizer { terms: vec![] };
        assert!(matches!(
            fit(&data, Loss::Squared, &reg, &FitConfig::default()),
            Err(ModelError::InvalidSpec(_))
        ));
    }
}
