//! Conjugate-gradient and MINRES iterative solvers over [`LinOp`].

use super::{LinOp, LinopError, SolverConfig};
use ndarray::{Array1, ArrayView1};

/// Iteration count and final residual norm of an iterative solve.
#[derive(Debug, Clone, Copy)]
pub struct SolveInfo {
    pub iterations: usize,
    pub residual: f64,
}

fn check_dims(op: &dyn LinOp, b: ArrayView1<f64>) -> Result<(), LinopError> {
    if op.rows() != op.cols() || op.rows() != b.len() {
        return Err(LinopError::DimensionMismatch {
            rows: op.rows(),
            cols: op.cols(),
            len: b.len(),
        });
    }
    Ok(())
}

fn norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

/// Conjugate gradients for symmetric positive definite `op`.
///
/// Returns `x` with `‖op(x) − b‖ ≤ max(abs_tol, rel_tol·‖b‖)`. The recurrence
/// residual drifts from the true residual in long runs, so the true residual
/// is re-evaluated before declaring convergence.
pub fn cg_solve(
    op: &dyn LinOp,
    b: ArrayView1<f64>,
    cfg: &SolverConfig,
) -> Result<Array1<f64>, LinopError> {
    let (x, _info) = cg_solve_with_info(op, b, cfg)?;
    Ok(x)
}

pub fn cg_solve_with_info(
    op: &dyn LinOp,
    b: ArrayView1<f64>,
    cfg: &SolverConfig,
) -> Result<(Array1<f64>, SolveInfo), LinopError> {
    cfg.validate()?;
    check_dims(op, b)?;
    let n = b.len();
    let target = cfg.target_residual(norm(&b.to_owned()));
    let max_iter = cfg.iter_cap(n);

    let mut x = Array1::<f64>::zeros(n);
    let mut r = b.to_owned();
    let mut rnorm = norm(&r);
    if rnorm <= target {
        return Ok((x, SolveInfo { iterations: 0, residual: rnorm }));
    }
    let mut p = r.clone();
    let mut rs_old = r.dot(&r);

    for iter in 1..=max_iter {
        let ap = op.apply(p.view());
        let pap = p.dot(&ap);
        if pap <= 0.0 {
            // Not positive definite along p; surface as non-convergence.
            return Err(LinopError::NonConvergence { iterations: iter, residual: rnorm });
        }
        let alpha = rs_old / pap;
        x.scaled_add(alpha, &p);
        r.scaled_add(-alpha, &ap);
        let rs_new = r.dot(&r);
        rnorm = rs_new.sqrt();
        if rnorm <= target {
            // Recompute the true residual to guard against recurrence drift.
            let true_r = &b.to_owned() - &op.apply(x.view());
            let true_norm = norm(&true_r);
            if true_norm <= target {
                return Ok((x, SolveInfo { iterations: iter, residual: true_norm }));
            }
            r = true_r;
            rnorm = true_norm;
            let rs = r.dot(&r);
            p = r.clone();
            rs_old = rs;
            continue;
        }
        let beta = rs_new / rs_old;
        p = &r + &(beta * &p);
        rs_old = rs_new;
    }
    Err(LinopError::NonConvergence { iterations: max_iter, residual: rnorm })
}

/// MINRES for symmetric (possibly indefinite or singular-consistent) `op`.
pub fn minres_solve(
    op: &dyn LinOp,
    b: ArrayView1<f64>,
    cfg: &SolverConfig,
) -> Result<Array1<f64>, LinopError> {
    let (x, _info) = minres_solve_with_info(op, b, cfg)?;
    Ok(x)
}

pub fn minres_solve_with_info(
    op: &dyn LinOp,
    b: ArrayView1<f64>,
    cfg: &SolverConfig,
) -> Result<(Array1<f64>, SolveInfo), LinopError> {
    cfg.validate()?;
    check_dims(op, b)?;
    let n = b.len();
    let max_iter = cfg.iter_cap(n);

    let beta1 = norm(&b.to_owned());
    let target = cfg.target_residual(beta1);
    let mut x = Array1::<f64>::zeros(n);
    if beta1 <= target {
        return Ok((x, SolveInfo { iterations: 0, residual: beta1 }));
    }

    // Lanczos vectors and Givens rotation state (Paige–Saunders).
    let mut r1 = b.to_owned();
    let mut r2 = b.to_owned();
    let mut y = b.to_owned();
    let mut w = Array1::<f64>::zeros(n);
    let mut w2 = Array1::<f64>::zeros(n);

    let mut oldb = 0.0f64;
    let mut beta = beta1;
    let mut dbar = 0.0f64;
    let mut epsln = 0.0f64;
    let mut phibar = beta1;
    let mut cs = -1.0f64;
    let mut sn = 0.0f64;

    for iter in 1..=max_iter {
        let s = 1.0 / beta;
        let v = y.mapv(|t| t * s);
        y = op.apply(v.view());
        if iter >= 2 {
            y.scaled_add(-beta / oldb, &r1);
        }
        let alfa = v.dot(&y);
        y.scaled_add(-alfa / beta, &r2);
        r1 = std::mem::replace(&mut r2, y.clone());
        oldb = beta;
        beta = norm(&y);

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = (gbar * gbar + beta * beta).sqrt().max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        let w1 = std::mem::replace(&mut w2, w.clone());
        w = (&v - &(oldeps * &w1) - &(delta * &w2)).mapv(|t| t / gamma);
        x.scaled_add(phi, &w);

        if phibar.abs() <= target {
            let true_r = &b.to_owned() - &op.apply(x.view());
            let true_norm = norm(&true_r);
            if true_norm <= target * 10.0 {
                return Ok((x, SolveInfo { iterations: iter, residual: true_norm }));
            }
        }
        if beta <= f64::EPSILON * beta1 {
            // Krylov breakdown: exact solution reached within this subspace.
            let true_r = &b.to_owned() - &op.apply(x.view());
            let true_norm = norm(&true_r);
            return Ok((x, SolveInfo { iterations: iter, residual: true_norm }));
        }
    }

    let true_r = &b.to_owned() - &op.apply(x.view());
    let true_norm = norm(&true_r);
    if true_norm <= target * 10.0 {
        return Ok((x, SolveInfo { iterations: max_iter, residual: true_norm }));
    }
    Err(LinopError::NonConvergence { iterations: max_iter, residual: true_norm })
}

#[cfg(test)]
mod tests {
    use super::super::tests::{random_matrix, random_spd};
    use super::super::{DenseOp, DiagOp, LdlFactor};
    use super::*;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cg_identity_returns_rhs() {
        let op = DiagOp::new(Array1::ones(5));
        let b = array![3.0, -1.0, 0.0, 2.0, 5.0];
        let x = cg_solve(&op, b.view(), &SolverConfig::default()).unwrap();
        for i in 0..5 {
            assert!((x[i] - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn cg_diagonal_solve() {
        let op = DiagOp::new(array![1.0, 2.0, 3.0, 4.0]);
        let b = array![1.0, 1.0, 1.0, 1.0];
        let x = cg_solve(&op, b.view(), &SolverConfig::default()).unwrap();
        let expect = [1.0, 0.5, 1.0 / 3.0, 0.25];
        for i in 0..4 {
            assert!((x[i] - expect[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn cg_matches_direct_factorization_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_spd(&mut rng, 20);
        let b = Array1::from_shape_fn(20, |_| rng.random::<f64>() - 0.5);
        let cfg = SolverConfig {
            rel_tol: 1e-12,
            abs_tol: 1e-14,
            ..SolverConfig::default()
        };
        let x = cg_solve(&DenseOp::new(a.clone()), b.view(), &cfg).unwrap();
        let oracle = LdlFactor::new(&a).unwrap().solve(b.view());
        for i in 0..20 {
            assert!((x[i] - oracle[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn cg_dimension_mismatch() {
        let op = DiagOp::new(array![1.0, 2.0]);
        let b = array![1.0, 1.0, 1.0];
        assert!(matches!(
            cg_solve(&op, b.view(), &SolverConfig::default()),
            Err(LinopError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn cg_nonconvergence_reports_iterations() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_spd(&mut rng, 30);
        let b = Array1::from_shape_fn(30, |_| rng.random::<f64>() - 0.5);
        let cfg = SolverConfig {
            max_iter: Some(1),
            rel_tol: 1e-14,
            abs_tol: 1e-16,
            ..SolverConfig::default()
        };
        match cg_solve(&DenseOp::new(a), b.view(), &cfg) {
            Err(LinopError::NonConvergence { iterations, .. }) => assert_eq!(iterations, 1),
            other => panic!("expected NonConvergence, got {other:?}"),
        }
    }

    #[test]
    fn minres_identity_and_permutation() {
        let op = DiagOp::new(Array1::ones(3));
        let b = array![1.0, 2.0, 3.0];
        let x = minres_solve(&op, b.view(), &SolverConfig::default()).unwrap();
        for i in 0..3 {
            assert!((x[i] - b[i]).abs() < 1e-9);
        }

        let perm = DenseOp::new(array![[0.0, 1.0], [1.0, 0.0]]);
        let b = array![1.0, 2.0];
        let x = minres_solve(&perm, b.view(), &SolverConfig::default()).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn minres_matches_direct_on_indefinite_kkt() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let m = random_matrix(&mut rng, 30, 30);
        let sym = 0.5 * (&m + &m.t());
        // Shift to make it clearly indefinite but nonsingular.
        let mut a = sym;
        for i in 0..30 {
            a[[i, i]] += if i % 2 == 0 { 2.0 } else { -2.0 };
        }
        let b = Array1::from_shape_fn(30, |_| rng.random::<f64>() - 0.5);
        let cfg = SolverConfig {
            rel_tol: 1e-12,
            abs_tol: 1e-14,
            ..SolverConfig::default()
        };
        let x = minres_solve(&DenseOp::new(a.clone()), b.view(), &cfg).unwrap();
        let oracle = LdlFactor::new(&a).unwrap().solve(b.view());
        for i in 0..30 {
            assert!((x[i] - oracle[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn minres_singular_consistent_system() {
        // Rank-deficient PSD with b in the range: diag(1, 1, 0), b3 = 0.
        let op = DiagOp::new(array![1.0, 2.0, 0.0]);
        let b = array![1.0, 4.0, 0.0];
        let x = minres_solve(&op, b.view(), &SolverConfig::default()).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-9);
        assert!((x[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn all_three_solvers_agree_on_well_conditioned_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for n in [10, 50, 200] {
            let a = random_spd(&mut rng, n);
            let b = Array1::from_shape_fn(n, |_| rng.random::<f64>() - 0.5);
            let cfg = SolverConfig {
                rel_tol: 1e-12,
                abs_tol: 1e-14,
                ..SolverConfig::default()
            };
            let op = DenseOp::new(a.clone());
            let x_cg = cg_solve(&op, b.view(), &cfg).unwrap();
            let x_mr = minres_solve(&op, b.view(), &cfg).unwrap();
            let x_dl = LdlFactor::new(&a).unwrap().solve(b.view());
            let scale = x_dl.dot(&x_dl).sqrt();
            let d1 = (&x_cg - &x_dl).mapv(f64::abs).sum() / scale;
            let d2 = (&x_mr - &x_dl).mapv(f64::abs).sum() / scale;
            assert!(d1 < 1e-6 && d2 < 1e-6, "n={n} d1={d1:.2e} d2={d2:.2e}");
        }
    }
}
