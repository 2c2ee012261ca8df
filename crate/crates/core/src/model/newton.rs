//! Newton solvers: logistic regression with smooth quadratic penalties, and
//! kernel models (squared or logistic loss with an RKHS ridge penalty).

use super::{FitConfig, Loss, ModelError, SolveStats};
use crate::data::{Dataset, DesignMatrix};
use crate::linops::{cg_solve_with_info, LdlFactor, SolverConfig, SymFnOp};
use crate::model::regularizer::{regularizer_hessian, ActiveSet, Regularizer};
use ndarray::{Array1, Array2};

const DENSE_LIMIT: usize = 2500;

/// Newton with backtracking line search for
/// `Σ ℓ(y_i, x_iᵀβ) + ½ βᵀ R β` with logistic ℓ.
pub fn fit_logistic(
    data: &Dataset,
    reg: &Regularizer,
    cfg: &FitConfig,
) -> Result<(Array1<f64>, SolveStats), ModelError> {
    let n = data.n_samples();
    let p = data.n_features();
    let sets: Vec<ActiveSet> = reg.terms.iter().map(|_| ActiveSet::Smooth).collect();
    let hess = regularizer_hessian(reg, Array1::zeros(p).view(), &sets, &cfg.policy)?;
    if hess.is_zero() {
        return Err(ModelError::InvalidSpec(
            "logistic fit requires a positive smooth penalty".into(),
        ));
    }

    let loss = Loss::Logistic;
    let objective = |beta: &Array1<f64>, preds: &Array1<f64>| -> f64 {
        let fit: f64 = data.y.iter().zip(preds.iter()).map(|(&y, &z)| loss.value(y, z)).sum();
        fit + 0.5 * beta.dot(&hess.apply(beta.view()))
    };

    let mut beta = Array1::<f64>::zeros(p);
    let mut preds = Array1::<f64>::zeros(n);
    let mut obj = objective(&beta, &preds);

    // Gradient scale from the zero iterate.
    let g0 = {
        let d1 = Array1::from_shape_fn(n, |i| loss.d1(data.y[i], 0.0));
        data.x.rmatvec(d1.view())
    };
    let scale = g0.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = cfg.tol * scale;

    let dense_x: Option<Array2<f64>> = if p <= DENSE_LIMIT {
        Some(match &data.x {
            DesignMatrix::Dense(m) => m.clone(),
            DesignMatrix::Sparse(m) => m.to_dense(),
        })
    } else {
        None
    };

    let mut residual = f64::INFINITY;
    for iter in 0..200 {
        let d1 = Array1::from_shape_fn(n, |i| loss.d1(data.y[i], preds[i]));
        let d2 = Array1::from_shape_fn(n, |i| loss.d2(data.y[i], preds[i]));
        let mut grad = data.x.rmatvec(d1.view());
        grad += &hess.apply(beta.view());
        residual = grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if residual <= tol {
            return Ok((
                beta,
                SolveStats { iterations: iter, objective: obj, optimality_residual: residual },
            ));
        }

        let neg_grad = grad.mapv(|v| -v);
        let direction = match &dense_x {
            Some(xd) => {
                // XᵀH X + R assembled densely.
                let weighted = xd * &d2.view().insert_axis(ndarray::Axis(1));
                let mut h = xd.t().dot(&weighted);
                h += &hess.to_dense();
                LdlFactor::new(&h)?.solve(neg_grad.view())
            }
            None => {
                let op = SymFnOp::new(p, |v| {
                    let xv = data.x.matvec(v);
                    let hxv = &xv * &d2;
                    let mut out = data.x.rmatvec(hxv.view());
                    out += &hess.apply(v);
                    out
                });
                let solver_cfg = SolverConfig {
                    rel_tol: 1e-10,
                    ..SolverConfig::default()
                };
                cg_solve_with_info(&op, neg_grad.view(), &solver_cfg)?.0
            }
        };

        // Backtracking line search (Armijo).
        let slope = grad.dot(&direction);
        let dx_preds = data.x.matvec(direction.view());
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = &beta + &(&direction * t);
            let cand_preds = &preds + &(&dx_preds * t);
            let cand_obj = objective(&cand, &cand_preds);
            if cand_obj <= obj + 1e-4 * t * slope {
                beta = cand;
                preds = cand_preds;
                obj = cand_obj;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Err(ModelError::NonConvergence { iterations: 200, residual })
}

/// Newton in the dual for `Σ ℓ(y_i, (Kα)_i) + (λ/2) αᵀKα`.
///
/// The Newton system `K(H K + λI) Δ = −K(g + λα)` is reduced to
/// `(H K + λI) Δ = −(g + λα)` and symmetrized as
/// `H^{1/2} K H^{1/2} + λI`, kept SPD by the positive loss curvature.
pub fn fit_kernel_newton(
    gram: &Array2<f64>,
    y: &Array1<f64>,
    loss: Loss,
    lambda: f64,
    cfg: &FitConfig,
) -> Result<(Array1<f64>, SolveStats), ModelError> {
    let n = y.len();
    let objective = |alpha: &Array1<f64>, preds: &Array1<f64>| -> f64 {
        let fit: f64 = y.iter().zip(preds.iter()).map(|(&yi, &z)| loss.value(yi, z)).sum();
        fit + 0.5 * lambda * alpha.dot(preds)
    };

    let mut alpha = Array1::<f64>::zeros(n);
    let mut preds = Array1::<f64>::zeros(n);
    let mut obj = objective(&alpha, &preds);

    let g0 = {
        let d1 = Array1::from_shape_fn(n, |i| loss.d1(y[i], 0.0));
        gram.dot(&d1)
    };
    let scale = g0.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = cfg.tol * scale;

    let mut residual = f64::INFINITY;
    for iter in 0..200 {
        let d1 = Array1::from_shape_fn(n, |i| loss.d1(y[i], preds[i]));
        let d2 = Array1::from_shape_fn(n, |i| loss.d2(y[i], preds[i]));
        let inner = &d1 + &alpha.mapv(|a| lambda * a);
        let grad = gram.dot(&inner);
        residual = grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if residual <= tol {
            return Ok((
                alpha,
                SolveStats { iterations: iter, objective: obj, optimality_residual: residual },
            ));
        }

        // Curvature floor keeps the scaling invertible when the logistic
        // loss saturates; the floored system is still SPD so the direction
        // stays a descent direction.
        let s = d2.mapv(|v| v.max(1e-12).sqrt());
        let rhs = -(&inner) * &s.mapv(|v| 1.0 / v);
        let direction = if n <= DENSE_LIMIT {
            let mut m = gram.clone();
            for i in 0..n {
                for j in 0..n {
                    m[[i, j]] *= s[i] * s[j];
                }
                m[[i, i]] += lambda;
            }
            let w = LdlFactor::new(&m)?.solve(rhs.view());
            &w * &s
        } else {
            let op = SymFnOp::new(n, |v| {
                let sv = &v.to_owned() * &s;
                let ksv = gram.dot(&sv);
                let mut out = &ksv * &s;
                out.scaled_add(lambda, &v.to_owned());
                out
            });
            let solver_cfg = SolverConfig { rel_tol: 1e-10, ..SolverConfig::default() };
            let w = cg_solve_with_info(&op, rhs.view(), &solver_cfg)?.0;
            &w * &s
        };

        let slope = grad.dot(&direction);
        let d_preds = gram.dot(&direction);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = &alpha + &(&direction * t);
            let cand_preds = &preds + &(&d_preds * t);
            let cand_obj = objective(&cand, &cand_preds);
            if cand_obj <= obj + 1e-4 * t * slope {
                alpha = cand;
                preds = cand_preds;
                obj = cand_obj;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Err(ModelError::NonConvergence { iterations: 200, residual })
}
