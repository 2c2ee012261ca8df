//! Model fitting: loss and regularizer specifications with exact derivatives,
//! and per-family solvers for empirical risk minimization.

mod admm;
mod cd;
mod fista;
mod loss;
mod newton;
mod regularizer;
mod ridge;

pub use loss::Loss;
pub use regularizer::{
    active_sets, regularizer_hessian, term_measures, ActiveSet, ActiveSetPolicy, RegHessian,
    RegTerm, Regularizer, RegularizerError,
};

use crate::data::{DataError, Dataset};
use crate::linops::LinopError;
use ndarray::{Array1, Array2};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("fit did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("invalid model specification: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Regularizer(#[from] RegularizerError),
    #[error(transparent)]
    Linop(#[from] LinopError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Convergence controls for the fit solvers.
///
/// `tol` bounds the first-order optimality residual relative to the gradient
/// scale of the problem (`max(1, ‖∇ at 0‖∞)`), keeping it two orders tighter
/// than the relative active-set threshold so active sets are detected
/// reliably.
#[derive(Debug, Clone, Copy)]
pub struct FitConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub policy: ActiveSetPolicy,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 200_000, policy: ActiveSetPolicy::default() }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SolveStats {
    pub iterations: usize,
    pub objective: f64,
    pub optimality_residual: f64,
}

/// Whether coefficients live in feature space or in the dual (kernel) space.
#[derive(Clone)]
pub enum Representation {
    Primal,
    Dual { gram: Arc<Array2<f64>> },
}

impl std::fmt::Debug for Representation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Representation::Primal => write!(f, "Primal"),
            Representation::Dual { gram } => write!(f, "Dual({}x{})", gram.nrows(), gram.ncols()),
        }
    }
}

/// A fitted empirical-risk-minimization model.
#[derive(Debug, Clone)]
pub struct FittedModel {
    /// β̂, or dual coefficients for kernel models.
    pub coefficients: Array1<f64>,
    /// In-sample predictions ŷ.
    pub predictions: Array1<f64>,
    pub loss: Loss,
    pub regularizer: Regularizer,
    /// Diagonal of H_ℓ: ℓ″(y_i, ŷ_i).
    pub hessian_weights: Array1<f64>,
    /// Per-term active sets at the fit, under the fit config's policy.
    pub active_sets: Vec<ActiveSet>,
    pub solve_stats: SolveStats,
    pub representation: Representation,
}

impl FittedModel {
    pub fn is_kernel(&self) -> bool {
        matches!(self.representation, Representation::Dual { .. })
    }

    /// Recompute active sets under a different threshold policy.
    pub fn active_set(&self, policy: &ActiveSetPolicy) -> Vec<ActiveSet> {
        active_sets(&self.regularizer, self.coefficients.view(), policy)
    }
}

/// Elementwise ℓ′, ℓ″, and ∂ℓ′/∂y at `(y_i, ŷ_i)`.
pub fn loss_derivative_vectors(
    model: &FittedModel,
    y: &Array1<f64>,
) -> (Array1<f64>, Array1<f64>, Array1<f64>) {
    assert_eq!(y.len(), model.predictions.len(), "length mismatch");
    let n = y.len();
    let mut g = Array1::<f64>::zeros(n);
    let mut h = Array1::<f64>::zeros(n);
    let mut dy = Array1::<f64>::zeros(n);
    for i in 0..n {
        g[i] = model.loss.d1(y[i], model.predictions[i]);
        h[i] = model.loss.d2(y[i], model.predictions[i]);
        dy[i] = model.loss.d1_dy(y[i], model.predictions[i]);
    }
    (g, h, dy)
}

/// Full objective of the ERM problem.
pub fn objective(data: &Dataset, loss: Loss, reg: &Regularizer, beta: &Array1<f64>) -> f64 {
    let preds = data.x.matvec(beta.view());
    let fit: f64 = data.y.iter().zip(preds.iter()).map(|(&y, &z)| loss.value(y, z)).sum();
    fit + reg.value(beta.view())
}

fn finish_model(
    data: &Dataset,
    loss: Loss,
    reg: &Regularizer,
    beta: Array1<f64>,
    stats: SolveStats,
    cfg: &FitConfig,
) -> FittedModel {
    let predictions = data.x.matvec(beta.view());
    let n = data.n_samples();
    let mut hessian_weights = Array1::<f64>::zeros(n);
    for i in 0..n {
        hessian_weights[i] = loss.d2(data.y[i], predictions[i]);
    }
    let active = active_sets(reg, beta.view(), &cfg.policy);
    FittedModel {
        coefficients: beta,
        predictions,
        loss,
        regularizer: reg.clone(),
        hessian_weights,
        active_sets: active,
        solve_stats: stats,
        representation: Representation::Primal,
    }
}

/// Shape of the regularizer, used to pick a solver.
enum FitFamily {
    SmoothOnly,
    ElasticNet { l1: f64, l2: f64 },
    L1Affine { term_index: usize, l2: f64 },
    GroupLasso { term_index: usize, l2: f64 },
    Unsupported(String),
}

fn classify(reg: &Regularizer) -> FitFamily {
    let mut l1: Option<f64> = None;
    let mut l2 = 0.0;
    let mut quad = false;
    let mut l1_affine: Option<usize> = None;
    let mut group: Option<usize> = None;
    for (idx, term) in reg.terms.iter().enumerate() {
        match term {
            RegTerm::SquaredL2 { weight } => l2 += weight,
            RegTerm::SmoothQuadratic { .. } => quad = true,
            RegTerm::L1 { weight } => {
                if l1.replace(*weight).is_some() {
                    return FitFamily::Unsupported("multiple l1 terms".into());
                }
            }
            RegTerm::L1Affine { .. } => {
                if l1_affine.replace(idx).is_some() {
                    return FitFamily::Unsupported("multiple l1_affine terms".into());
                }
            }
            RegTerm::GroupL2 { .. } => {
                if group.replace(idx).is_some() {
                    return FitFamily::Unsupported("multiple group_l2 terms".into());
                }
            }
        }
    }
    let nonsmooth_kinds =
        l1.is_some() as usize + l1_affine.is_some() as usize + group.is_some() as usize;
    if nonsmooth_kinds > 1 {
        return FitFamily::Unsupported("mixed non-smooth terms".into());
    }
    if nonsmooth_kinds == 0 {
        return FitFamily::SmoothOnly;
    }
    if quad {
        return FitFamily::Unsupported("smooth_quadratic combined with a non-smooth term".into());
    }
    if let Some(theta) = l1 {
        FitFamily::ElasticNet { l1: theta, l2 }
    } else if let Some(idx) = l1_affine {
        FitFamily::L1Affine { term_index: idx, l2 }
    } else {
        FitFamily::GroupLasso { term_index: group.unwrap(), l2 }
    }
}

/// Fit the empirical-risk-minimization problem, dispatching on the model
/// family: coordinate descent for lasso/elastic net, Newton for logistic
/// ridge, ADMM for ℓ1-of-affine penalties, proximal gradient for the group
/// lasso, and a direct or CG solve for pure ridge.
pub fn fit(
    data: &Dataset,
    loss: Loss,
    reg: &Regularizer,
    cfg: &FitConfig,
) -> Result<FittedModel, ModelError> {
    reg.validate()?;
    for (i, &v) in data.y.iter().enumerate() {
        if !v.is_finite() {
            return Err(ModelError::Data(DataError::NonFinite { row: i }));
        }
    }
    let (beta, stats) = match (loss, classify(reg)) {
        (Loss::Squared, FitFamily::SmoothOnly) => ridge::fit_ridge(data, reg, cfg)?,
        (Loss::Logistic, FitFamily::SmoothOnly) => newton::fit_logistic(data, reg, cfg)?,
        (Loss::Squared, FitFamily::ElasticNet { l1, l2 }) => cd::fit_elastic_net(data, l1, l2, cfg)?,
        (Loss::Squared, FitFamily::L1Affine { term_index, l2 }) => {
            admm::fit_l1_affine(data, reg, term_index, l2, cfg)?
        }
        (Loss::Squared, FitFamily::GroupLasso { term_index, l2 }) => {
            fista::fit_group_lasso(data, reg, term_index, l2, cfg)?
        }
        (l, FitFamily::Unsupported(why)) => {
            return Err(ModelError::InvalidSpec(format!("{l:?} loss: {why}")))
        }
        (l, _) => {
            return Err(ModelError::InvalidSpec(format!(
                "no solver for {l:?} loss with this regularizer"
            )))
        }
    };
    Ok(finish_model(data, loss, reg, beta, stats, cfg))
}

/// Fit a kernel model `Σ ℓ(y_i, (Kα)_i) + (λ/2) αᵀKα` given the Gram matrix.
/// The feature map is never materialized; coefficients are dual.
pub fn fit_kernel(
    gram: &Arc<Array2<f64>>,
    y: &Array1<f64>,
    loss: Loss,
    ridge_weight: f64,
    cfg: &FitConfig,
) -> Result<FittedModel, ModelError> {
    if gram.nrows() != gram.ncols() || gram.nrows() != y.len() {
        return Err(ModelError::InvalidSpec("gram matrix and labels must agree".into()));
    }
    if ridge_weight <= 0.0 {
        return Err(ModelError::InvalidSpec("kernel fit requires a positive ridge weight".into()));
    }
    let (alpha, stats) = newton::fit_kernel_newton(gram, y, loss, ridge_weight, cfg)?;
    let predictions = gram.dot(&alpha);
    let n = y.len();
    let mut hessian_weights = Array1::<f64>::zeros(n);
    for i in 0..n {
        hessian_weights[i] = loss.d2(y[i], predictions[i]);
    }
    let reg = Regularizer::ridge(ridge_weight);
    Ok(FittedModel {
        coefficients: alpha,
        predictions,
        loss,
        regularizer: reg,
        hessian_weights,
        active_sets: vec![ActiveSet::Smooth],
        solve_stats: stats,
        representation: Representation::Dual { gram: Arc::clone(gram) },
    })
}
