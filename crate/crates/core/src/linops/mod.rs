//! Linear-operator abstraction, dense factorizations, Krylov solvers, and the
//! saddle-point KKT solver that backs all Jacobian–vector products.

mod eigh;
mod kkt;
mod ldl;
mod qr;
mod solvers;

pub use eigh::eigh;
pub use kkt::{kkt_solve, KktMatrix, KktSolution, KktSolver, KktSystem, Quadratic};
pub use ldl::LdlFactor;
pub use qr::{prune_redundant_rows, prune_tol, ColPivQr};
pub use solvers::{
    cg_solve, cg_solve_with_info, minres_solve, minres_solve_with_info, SolveInfo,
};

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinopError {
    #[error("dimension mismatch: operator is {rows}x{cols}, vector has length {len}")]
    DimensionMismatch { rows: usize, cols: usize, len: usize },
    #[error("solver did not converge within {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("matrix is singular (pivot {pivot:.3e} below threshold at index {index})")]
    SingularMatrix { index: usize, pivot: f64 },
    #[error("KKT system is not uniquely solvable: {0}")]
    SingularKkt(String),
    #[error("invalid solver config: {0}")]
    InvalidConfig(String),
}

/// A matrix-free linear map together with its adjoint.
///
/// `apply` maps length-`cols` vectors to length-`rows` vectors and
/// `apply_adjoint` the reverse; implementations must satisfy
/// `⟨u, A v⟩ = ⟨Aᵀ u, v⟩`.
pub trait LinOp: Send + Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn apply(&self, x: ArrayView1<f64>) -> Array1<f64>;
    fn apply_adjoint(&self, x: ArrayView1<f64>) -> Array1<f64>;

    /// Dense representation when the operator stores one (used by direct solvers).
    fn as_dense(&self) -> Option<&Array2<f64>> {
        None
    }
}

/// Dense matrix operator.
pub struct DenseOp {
    matrix: Array2<f64>,
}

impl DenseOp {
    pub fn new(matrix: Array2<f64>) -> Self {
        Self { matrix }
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }
}

impl LinOp for DenseOp {
    fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    fn apply(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.matrix.dot(&x)
    }

    fn apply_adjoint(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.matrix.t().dot(&x)
    }

    fn as_dense(&self) -> Option<&Array2<f64>> {
        Some(&self.matrix)
    }
}

/// Diagonal operator.
pub struct DiagOp {
    diag: Array1<f64>,
}

impl DiagOp {
    pub fn new(diag: Array1<f64>) -> Self {
        Self { diag }
    }
}

impl LinOp for DiagOp {
    fn rows(&self) -> usize {
        self.diag.len()
    }

    fn cols(&self) -> usize {
        self.diag.len()
    }

    fn apply(&self, x: ArrayView1<f64>) -> Array1<f64> {
        &self.diag * &x
    }

    fn apply_adjoint(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.apply(x)
    }
}

/// Symmetric operator defined by a closure; adjoint equals apply.
pub struct SymFnOp<F: Fn(ArrayView1<f64>) -> Array1<f64> + Send + Sync> {
    dim: usize,
    f: F,
}

impl<F: Fn(ArrayView1<f64>) -> Array1<f64> + Send + Sync> SymFnOp<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(ArrayView1<f64>) -> Array1<f64> + Send + Sync> LinOp for SymFnOp<F> {
    fn rows(&self) -> usize {
        self.dim
    }

    fn cols(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: ArrayView1<f64>) -> Array1<f64> {
        (self.f)(x)
    }

    fn apply_adjoint(&self, x: ArrayView1<f64>) -> Array1<f64> {
        (self.f)(x)
    }
}

/// Method used by [`kkt_solve`] and the solver front ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    DirectLdl,
    Cg,
    Minres,
    #[default]
    Auto,
}

/// Residual tolerances and iteration limit for the linear solvers.
///
/// The default stopping tolerances are not prescribed by the method itself;
/// they are chosen so that solve error stays well below the Monte-Carlo noise
/// floor of randomized diagonal estimation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Iteration cap; `None` means `10 * dim`.
    pub max_iter: Option<usize>,
    pub method: SolveMethod,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            max_iter: None,
            method: SolveMethod::Auto,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), LinopError> {
        if !(self.abs_tol > 0.0) || !(self.rel_tol > 0.0) {
            return Err(LinopError::InvalidConfig(
                "tolerances must be strictly positive".into(),
            ));
        }
        if let Some(m) = self.max_iter {
            if m < 1 {
                return Err(LinopError::InvalidConfig("max_iter must be >= 1".into()));
            }
        }
        Ok(())
    }

    pub fn iter_cap(&self, dim: usize) -> usize {
        self.max_iter.unwrap_or(10 * dim.max(1))
    }

    pub fn target_residual(&self, rhs_norm: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * rhs_norm)
    }
}

/// Solve `matrix * x = b` for a dense symmetric nonsingular matrix.
///
/// Convenience wrapper over [`LdlFactor`]; factor once via `LdlFactor::new`
/// when several right-hand sides share the matrix.
pub fn direct_solve(matrix: &Array2<f64>, b: ArrayView1<f64>) -> Result<Array1<f64>, LinopError> {
    if matrix.nrows() != b.len() {
        return Err(LinopError::DimensionMismatch {
            rows: matrix.nrows(),
            cols: matrix.ncols(),
            len: b.len(),
        });
    }
    let factor = LdlFactor::new(matrix)?;
    Ok(factor.solve(b))
}
