//! Equality-constrained quadratic programs solved through their saddle-point
//! optimality system
//!
//! ```text
//! [ P  Nᵀ ] [ v ]   [ rhs_top    ]
//! [ N  0  ] [ ν ] = [ rhs_bottom ]
//! ```
//!
//! with `P` symmetric PSD and positive definite on the null space of `N`.
//! The constraint block must be pruned to full row rank beforehand (see
//! [`super::prune_redundant_rows`]).

use super::{
    cg_solve_with_info, minres_solve_with_info, LdlFactor, LinOp, LinopError, SolveMethod,
    SolverConfig, SymFnOp,
};
use ndarray::{s, Array1, Array2, ArrayView1};
use std::sync::Arc;

/// Quadratic block of a KKT system: dense when a direct factorization is
/// wanted, operator form for matrix-free iterative solves.
pub enum Quadratic {
    Dense(Array2<f64>),
    Operator(Arc<dyn LinOp>),
}

impl Quadratic {
    pub fn dim(&self) -> usize {
        match self {
            Quadratic::Dense(m) => m.nrows(),
            Quadratic::Operator(op) => op.rows(),
        }
    }

    pub fn apply(&self, x: ArrayView1<f64>) -> Array1<f64> {
        match self {
            Quadratic::Dense(m) => m.dot(&x),
            Quadratic::Operator(op) => op.apply(x),
        }
    }
}

/// A fully specified KKT system (matrix and right-hand side).
pub struct KktSystem {
    pub quadratic: Quadratic,
    /// One row per independent constraint; may have zero rows.
    pub constraints: Array2<f64>,
    pub rhs_top: Array1<f64>,
    /// Always zero in this artifact, kept for the general contract.
    pub rhs_bottom: Array1<f64>,
}

/// Solution pair of the saddle system.
#[derive(Debug, Clone)]
pub struct KktSolution {
    pub v: Array1<f64>,
    pub multipliers: Array1<f64>,
}

/// Matrix part of a KKT system with a reusable solve strategy, so that one
/// factorization serves many right-hand sides.
pub struct KktMatrix {
    pub quadratic: Quadratic,
    pub constraints: Array2<f64>,
}

pub enum KktSolver {
    /// LDLᵀ of the assembled saddle matrix.
    Direct {
        factor: LdlFactor,
        saddle: Array2<f64>,
        p: usize,
        q: usize,
        cfg: SolverConfig,
    },
    /// Unconstrained PSD system solved by conjugate gradients.
    ReducedCg { matrix: KktMatrix, cfg: SolverConfig },
    /// MINRES on the full (indefinite) saddle operator.
    SaddleMinres { matrix: KktMatrix, cfg: SolverConfig },
}

/// Dense saddle assembly threshold for the auto method.
const DIRECT_DIM_LIMIT: usize = 5000;

impl KktSolver {
    pub fn build(matrix: KktMatrix, cfg: &SolverConfig) -> Result<Self, LinopError> {
        cfg.validate()?;
        let p = matrix.quadratic.dim();
        let q = matrix.constraints.nrows();
        if q > 0 && matrix.constraints.ncols() != p {
            return Err(LinopError::DimensionMismatch {
                rows: q,
                cols: matrix.constraints.ncols(),
                len: p,
            });
        }

        let method = match cfg.method {
            SolveMethod::Auto => match &matrix.quadratic {
                Quadratic::Dense(_) if p + q < DIRECT_DIM_LIMIT => SolveMethod::DirectLdl,
                _ if q == 0 => SolveMethod::Cg,
                _ => SolveMethod::Minres,
            },
            m => m,
        };

        match method {
            SolveMethod::DirectLdl => {
                let dense = match &matrix.quadratic {
                    Quadratic::Dense(m) => m,
                    Quadratic::Operator(_) => {
                        return Err(LinopError::InvalidConfig(
                            "direct-ldl requires a dense quadratic block".into(),
                        ))
                    }
                };
                let n = p + q;
                let mut saddle = Array2::<f64>::zeros((n, n));
                saddle.slice_mut(s![..p, ..p]).assign(dense);
                if q > 0 {
                    saddle.slice_mut(s![p.., ..p]).assign(&matrix.constraints);
                    saddle.slice_mut(s![..p, p..]).assign(&matrix.constraints.t());
                }
                let factor = LdlFactor::new(&saddle).map_err(|e| match e {
                    LinopError::SingularMatrix { index, pivot } => LinopError::SingularKkt(
                        format!("saddle matrix singular at pivot {index} ({pivot:.3e})"),
                    ),
                    other => other,
                })?;
                Ok(KktSolver::Direct { factor, saddle, p, q, cfg: *cfg })
            }
            SolveMethod::Cg => {
                if q > 0 {
                    return Err(LinopError::InvalidConfig(
                        "cg method cannot handle constraint rows; use minres or direct-ldl".into(),
                    ));
                }
                Ok(KktSolver::ReducedCg { matrix, cfg: *cfg })
            }
            SolveMethod::Minres => Ok(KktSolver::SaddleMinres { matrix, cfg: *cfg }),
            SolveMethod::Auto => unreachable!(),
        }
    }

    /// Solve for one right-hand side.
    pub fn solve(
        &self,
        rhs_top: ArrayView1<f64>,
        rhs_bottom: ArrayView1<f64>,
    ) -> Result<KktSolution, LinopError> {
        match self {
            KktSolver::Direct { factor, saddle, p, q, cfg } => {
                let n = p + q;
                if rhs_top.len() != *p || rhs_bottom.len() != *q {
                    return Err(LinopError::DimensionMismatch {
                        rows: *p,
                        cols: *q,
                        len: rhs_top.len() + rhs_bottom.len(),
                    });
                }
                let mut rhs = Array1::<f64>::zeros(n);
                rhs.slice_mut(s![..*p]).assign(&rhs_top);
                rhs.slice_mut(s![*p..]).assign(&rhs_bottom);
                let mut x = factor.solve(rhs.view());
                // One round of iterative refinement keeps the residual at the
                // level the iterative paths are held to.
                let rhs_norm = rhs.dot(&rhs).sqrt();
                let target = cfg.target_residual(rhs_norm);
                for _ in 0..2 {
                    let r = &rhs - &saddle.dot(&x);
                    if r.dot(&r).sqrt() <= target {
                        break;
                    }
                    let dx = factor.solve(r.view());
                    x += &dx;
                }
                Ok(KktSolution {
                    v: x.slice(s![..*p]).to_owned(),
                    multipliers: x.slice(s![*p..]).to_owned(),
                })
            }
            KktSolver::ReducedCg { matrix, cfg } => {
                let p = matrix.quadratic.dim();
                let op = SymFnOp::new(p, |x| matrix.quadratic.apply(x));
                let (v, _) = cg_solve_with_info(&op, rhs_top, cfg)?;
                Ok(KktSolution { v, multipliers: Array1::zeros(0) })
            }
            KktSolver::SaddleMinres { matrix, cfg } => {
                let p = matrix.quadratic.dim();
                let q = matrix.constraints.nrows();
                let n = p + q;
                let op = SymFnOp::new(n, |x: ArrayView1<f64>| {
                    let (xv, xnu) = (x.slice(s![..p]), x.slice(s![p..]));
                    let mut top = matrix.quadratic.apply(xv);
                    if q > 0 {
                        top += &matrix.constraints.t().dot(&xnu);
                    }
                    let bottom = if q > 0 {
                        matrix.constraints.dot(&xv)
                    } else {
                        Array1::zeros(0)
                    };
                    let mut out = Array1::<f64>::zeros(n);
                    out.slice_mut(s![..p]).assign(&top);
                    out.slice_mut(s![p..]).assign(&bottom);
                    out
                });
                let mut rhs = Array1::<f64>::zeros(n);
                rhs.slice_mut(s![..p]).assign(&rhs_top);
                rhs.slice_mut(s![p..]).assign(&rhs_bottom);
                let (x, _) = minres_solve_with_info(&op, rhs.view(), cfg)?;
                Ok(KktSolution {
                    v: x.slice(s![..p]).to_owned(),
                    multipliers: x.slice(s![p..]).to_owned(),
                })
            }
        }
    }

    /// Whether building this solver performed the expensive work up front.
    pub fn is_direct(&self) -> bool {
        matches!(self, KktSolver::Direct { .. })
    }
}

/// Solve a single KKT system. Constraint rows must already be independent and
/// `P` positive definite on their null space; violations surface as
/// `SingularKkt` or `NonConvergence`.
pub fn kkt_solve(sys: KktSystem, cfg: &SolverConfig) -> Result<KktSolution, LinopError> {
    let KktSystem { quadratic, constraints, rhs_top, rhs_bottom } = sys;
    let solver = KktSolver::build(KktMatrix { quadratic, constraints }, cfg)?;
    solver.solve(rhs_top.view(), rhs_bottom.view())
}
