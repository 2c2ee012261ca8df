//! Risk estimators: the randomized ALO pipeline (randomized diagonal
//! estimation → truncated-normal MMSE correction → ALO-corrected predictions
//! → risk-inflation debiasing), plus exact ALO, the ridge LOO shortcut, and
//! K-fold cross-validation baselines.

mod truncnorm;

pub use truncnorm::truncated_normal_mean;

use crate::data::Dataset;
use crate::jacobian::{exact_diag, JacobianError, JvpOracle, SolveCounts};
use crate::linops::LdlFactor;
use crate::model::{fit, FitConfig, Loss, ModelError, Regularizer};
use ndarray::{Array1, Array2, Axis};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("ALO correction would divide by 1 − d at sample {index} (1 − d = {gap:.3e})")]
    DivisionGuard { index: usize, gap: f64 },
    #[error("debias regression needs at least two distinct subset sizes")]
    DegenerateDesign,
    #[error("invalid estimator argument: {0}")]
    InvalidArgument(String),
    #[error("fold {fold} refit failed: {source}")]
    FoldFit { fold: usize, source: Box<ModelError> },
    #[error(transparent)]
    Jacobian(#[from] JacobianError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

const DIVISION_GUARD_EPS: f64 = 1e-12;

/// Risk metric applied to (label, prediction) pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RiskFunction {
    SquaredError,
    Misclassification,
}

impl RiskFunction {
    pub fn evaluate(self, y: f64, z: f64) -> f64 {
        match self {
            RiskFunction::SquaredError => (y - z) * (y - z),
            RiskFunction::Misclassification => {
                if y * z < 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// n×m matrix of ±1 probes, reproducible from the seed. Column `k` draws from
/// its own ChaCha stream `(seed, k)`, so generation order (and thread count)
/// cannot change the values.
pub struct ProbeMatrix {
    pub entries: Array2<f64>,
    pub seed: u64,
}

impl ProbeMatrix {
    pub fn rademacher(n: usize, m: usize, seed: u64) -> Self {
        let mut entries = Array2::<f64>::zeros((n, m));
        for k in 0..m {
            entries.column_mut(k).assign(&probe_column(n, seed, k));
        }
        Self { entries, seed }
    }
}

fn probe_column(n: usize, seed: u64, k: usize) -> Array1<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64 + 1);
    Array1::from_shape_fn(n, |_| if rng.random::<bool>() { 1.0 } else { -1.0 })
}

/// Per-probe diagonal estimates `D[i][k] = [(J̃w_k) ⊙ w_k]_i` with row means
/// and (m−1)-divisor row variances.
pub struct DiagSamples {
    pub samples: Array2<f64>,
    pub mu: Array1<f64>,
    pub sigma2: Array1<f64>,
}

impl DiagSamples {
    pub fn m(&self) -> usize {
        self.samples.ncols()
    }

    /// Row means over a subset of probe columns.
    pub fn subset_mean(&self, subset: &[usize]) -> Array1<f64> {
        let n = self.samples.nrows();
        let mut mu = Array1::<f64>::zeros(n);
        for &k in subset {
            mu += &self.samples.column(k);
        }
        mu / subset.len() as f64
    }
}

/// Randomized diagonal estimation: m Jacobian–vector products against
/// Rademacher probes. Deterministic for a given seed regardless of thread
/// count (columns are seeded and written independently).
pub fn bks_diag_samples(
    oracle: &JvpOracle,
    m: usize,
    seed: u64,
) -> Result<DiagSamples, EstimatorError> {
    if m < 2 {
        return Err(EstimatorError::InvalidArgument("need at least 2 probes".into()));
    }
    let n = oracle.n();
    let columns: Result<Vec<Array1<f64>>, JacobianError> = (0..m)
        .into_par_iter()
        .map(|k| {
            let w = probe_column(n, seed, k);
            let jw = oracle.apply(w.view())?;
            Ok(&jw * &w)
        })
        .collect();
    let columns = columns?;
    let mut samples = Array2::<f64>::zeros((n, m));
    for (k, col) in columns.iter().enumerate() {
        samples.column_mut(k).assign(col);
    }
    let mu = samples.mean_axis(Axis(1)).unwrap();
    let mut sigma2 = Array1::<f64>::zeros(n);
    for i in 0..n {
        let row = samples.row(i);
        let mi = mu[i];
        sigma2[i] = row.iter().map(|&v| (v - mi) * (v - mi)).sum::<f64>() / (m as f64 - 1.0);
    }
    Ok(DiagSamples { samples, mu, sigma2 })
}

/// MMSE diagonal: truncated-normal posterior mean under a uniform [0,1]
/// prior, location = subset mean, scale = full-sample σ_i / √m_used.
pub fn mmse_diag(samples: &DiagSamples, m_used: usize, subset_mu: &Array1<f64>) -> Array1<f64> {
    let n = subset_mu.len();
    let mut d = Array1::<f64>::zeros(n);
    for i in 0..n {
        let scale = (samples.sigma2[i].max(0.0)).sqrt() / (m_used as f64).sqrt();
        d[i] = truncated_normal_mean(subset_mu[i], scale, 0.0, 1.0);
    }
    d
}

/// ALO-corrected predictions: `ỹ_i = ŷ_i + ℓ′·d_i / (ℓ″·(1 − d_i))`.
pub fn alo_correct(
    y: &Array1<f64>,
    y_hat: &Array1<f64>,
    d: &Array1<f64>,
    loss: Loss,
) -> Result<Array1<f64>, EstimatorError> {
    let n = y.len();
    let mut out = Array1::<f64>::zeros(n);
    for i in 0..n {
        let gap = 1.0 - d[i];
        if gap < DIVISION_GUARD_EPS {
            return Err(EstimatorError::DivisionGuard { index: i, gap });
        }
        let g = loss.d1(y[i], y_hat[i]);
        let h = loss.d2(y[i], y_hat[i]);
        out[i] = y_hat[i] + g * d[i] / (h * gap);
    }
    Ok(out)
}

/// Mean of φ over (y, ỹ) pairs.
pub fn plugin_risk(y: &Array1<f64>, y_tilde: &Array1<f64>, risk: RiskFunction) -> f64 {
    assert_eq!(y.len(), y_tilde.len());
    let n = y.len() as f64;
    y.iter().zip(y_tilde.iter()).map(|(&a, &b)| risk.evaluate(a, b)).sum::<f64>() / n
}

/// Ordinary least squares of R̂(m′) on [1, 1/m′]; returns (intercept, slope).
pub fn debias_regression(curve: &[(usize, f64)]) -> Result<(f64, f64), EstimatorError> {
    if curve.len() < 2 || curve.iter().all(|&(m, _)| m == curve[0].0) {
        return Err(EstimatorError::DegenerateDesign);
    }
    let n = curve.len() as f64;
    let u: Vec<f64> = curve.iter().map(|&(m, _)| 1.0 / m as f64).collect();
    let r: Vec<f64> = curve.iter().map(|&(_, v)| v).collect();
    let u_bar = u.iter().sum::<f64>() / n;
    let r_bar = r.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for i in 0..curve.len() {
        cov += (u[i] - u_bar) * (r[i] - r_bar);
        var += (u[i] - u_bar) * (u[i] - u_bar);
    }
    if var == 0.0 {
        return Err(EstimatorError::DegenerateDesign);
    }
    let slope = cov / var;
    let intercept = r_bar - slope * u_bar;
    Ok((intercept, slope))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorMethod {
    Randalo,
    BksAlo,
    ExactAlo,
    KfoldCv,
    LooCv,
    RidgeLoo,
}

impl std::fmt::Display for EstimatorMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            EstimatorMethod::Randalo => "randalo",
            EstimatorMethod::BksAlo => "bks_alo",
            EstimatorMethod::ExactAlo => "exact_alo",
            EstimatorMethod::KfoldCv => "kfold_cv",
            EstimatorMethod::LooCv => "loo_cv",
            EstimatorMethod::RidgeLoo => "ridge_loo",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    /// Full-dimension linear solves (factorizations + iterative solves).
    pub solve_count: usize,
    /// Oracle applications (probes / basis vectors).
    pub jvp_applies: usize,
    pub wall_time_s: Option<f64>,
    pub seed: Option<u64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RiskReport {
    /// R̂₀ (the headline risk estimate).
    pub estimate: f64,
    /// R̂₀′ from the debias regression, when one was performed.
    pub slope: Option<f64>,
    /// (m′, R̂(m′)) points; single point for non-subsampled methods.
    pub curve: Vec<(usize, f64)>,
    pub method: EstimatorMethod,
    pub diagnostics: Diagnostics,
}

fn counts_delta(after: SolveCounts, before: SolveCounts) -> (usize, usize) {
    (
        after.linear_solves() - before.linear_solves(),
        after.applies - before.applies,
    )
}

/// Draw a uniform without-replacement subset of {0..m} of size `m_used`,
/// seeded per (seed, m_used) so schedules are order-independent.
fn subset_indices(m: usize, m_used: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((1u64 << 33) + m_used as u64);
    rand::seq::index::sample(&mut rng, m, m_used).into_vec()
}

/// Full randomized-ALO pipeline: probe, estimate diagonals, correct with the
/// truncated-normal MMSE at every subset size in the schedule, and
/// extrapolate the infinite-probe risk by regressing on 1/m′.
#[allow(clippy::too_many_arguments)]
pub fn randalo(
    y: &Array1<f64>,
    y_hat: &Array1<f64>,
    oracle: &JvpOracle,
    loss: Loss,
    risk: RiskFunction,
    m: usize,
    seed: u64,
    subset_schedule: Option<&[usize]>,
) -> Result<RiskReport, EstimatorError> {
    if m < 4 {
        return Err(EstimatorError::InvalidArgument("randalo needs m >= 4".into()));
    }
    let start = Instant::now();
    let before = oracle.solve_counts();
    let samples = bks_diag_samples(oracle, m, seed)?;

    let default_schedule: Vec<usize> = (m.div_ceil(2)..=m).collect();
    let schedule: Vec<usize> = match subset_schedule {
        Some(s) => s.to_vec(),
        None => default_schedule,
    };
    if schedule.iter().any(|&s| s < 2 || s > m) {
        return Err(EstimatorError::InvalidArgument(
            "subset sizes must lie in [2, m]".into(),
        ));
    }

    let mut warnings = Vec::new();
    let mut curve = Vec::with_capacity(schedule.len());
    for &m_used in &schedule {
        let subset = if m_used == m {
            (0..m).collect::<Vec<_>>()
        } else {
            subset_indices(m, m_used, seed)
        };
        let sub_mu = samples.subset_mean(&subset);
        let d = mmse_diag(&samples, m_used, &sub_mu);
        match alo_correct(y, y_hat, &d, loss) {
            Ok(y_tilde) => curve.push((m_used, plugin_risk(y, &y_tilde, risk))),
            Err(EstimatorError::DivisionGuard { index, gap }) => {
                warnings.push(format!(
                    "subset m'={m_used} skipped: division guard at sample {index} (1-d={gap:.3e})"
                ));
            }
            Err(other) => return Err(other),
        }
    }
    let (estimate, slope) = debias_regression(&curve)?;
    if slope < 0.0 {
        warnings.push(format!("negative debias slope {slope:.3e}"));
    }
    let (solves, applies) = counts_delta(oracle.solve_counts(), before);
    Ok(RiskReport {
        estimate,
        slope: Some(slope),
        curve,
        method: EstimatorMethod::Randalo,
        diagnostics: Diagnostics {
            solve_count: solves,
            jvp_applies: applies,
            wall_time_s: Some(start.elapsed().as_secs_f64()),
            seed: Some(seed),
            warnings,
        },
    })
}

/// Plug-in estimate at the full probe count (no inflation debiasing).
pub fn bks_alo(
    y: &Array1<f64>,
    y_hat: &Array1<f64>,
    oracle: &JvpOracle,
    loss: Loss,
    risk: RiskFunction,
    m: usize,
    seed: u64,
) -> Result<RiskReport, EstimatorError> {
    let start = Instant::now();
    let before = oracle.solve_counts();
    let samples = bks_diag_samples(oracle, m, seed)?;
    let d = mmse_diag(&samples, m, &samples.mu);
    let y_tilde = alo_correct(y, y_hat, &d, loss)?;
    let estimate = plugin_risk(y, &y_tilde, risk);
    let (solves, applies) = counts_delta(oracle.solve_counts(), before);
    Ok(RiskReport {
        estimate,
        slope: None,
        curve: vec![(m, estimate)],
        method: EstimatorMethod::BksAlo,
        diagnostics: Diagnostics {
            solve_count: solves,
            jvp_applies: applies,
            wall_time_s: Some(start.elapsed().as_secs_f64()),
            seed: Some(seed),
            warnings: Vec::new(),
        },
    })
}

/// Plug-in risk at the exact Jacobian diagonal (n oracle applications).
pub fn exact_alo(
    y: &Array1<f64>,
    y_hat: &Array1<f64>,
    oracle: &JvpOracle,
    loss: Loss,
    risk: RiskFunction,
) -> Result<RiskReport, EstimatorError> {
    let start = Instant::now();
    let before = oracle.solve_counts();
    let diag = exact_diag(oracle)?;
    let y_tilde = alo_correct(y, y_hat, &diag, loss)?;
    let estimate = plugin_risk(y, &y_tilde, risk);
    let (solves, applies) = counts_delta(oracle.solve_counts(), before);
    Ok(RiskReport {
        estimate,
        slope: None,
        curve: vec![(oracle.n(), estimate)],
        method: EstimatorMethod::ExactAlo,
        diagnostics: Diagnostics {
            solve_count: solves,
            jvp_applies: applies,
            wall_time_s: Some(start.elapsed().as_secs_f64()),
            seed: None,
            warnings: Vec::new(),
        },
    })
}

/// Exact leave-one-out predictions for ridge regression via the hat-matrix
/// identity `ŷ₋ᵢ = (ŷᵢ − Jᵢᵢ yᵢ)/(1 − Jᵢᵢ)`.
pub fn ridge_loo_shortcut(
    data: &Dataset,
    lambda: f64,
) -> Result<Array1<f64>, EstimatorError> {
    if lambda <= 0.0 {
        return Err(EstimatorError::InvalidArgument("ridge shortcut needs λ > 0".into()));
    }
    let x = data.x.to_dense();
    let (n, p) = x.dim();
    let mut normal = x.t().dot(&x);
    for i in 0..p {
        normal[[i, i]] += lambda;
    }
    let factor = LdlFactor::new(&normal)
        .map_err(|e| EstimatorError::Jacobian(JacobianError::Linop(e)))?;
    let beta = factor.solve(x.t().dot(&data.y).view());
    let y_hat = x.dot(&beta);
    let mut out = Array1::<f64>::zeros(n);
    for i in 0..n {
        let xi = x.row(i).to_owned();
        let jii = xi.dot(&factor.solve(xi.view()));
        let gap = 1.0 - jii;
        if gap < DIVISION_GUARD_EPS {
            return Err(EstimatorError::DivisionGuard { index: i, gap });
        }
        out[i] = (y_hat[i] - jii * data.y[i]) / gap;
    }
    Ok(out)
}

/// Seeded K-fold partition: shuffled indices split into K near-equal folds,
/// remainder distributed one per fold.
pub fn kfold_partition(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1u64 << 34);
    idx.shuffle(&mut rng);
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut at = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(idx[at..at + size].to_vec());
        at += size;
    }
    folds
}

/// K-fold cross-validation: refit on each fold complement and average the
/// risk over held-out points. `k = n` is leave-one-out CV.
#[allow(clippy::too_many_arguments)]
pub fn kfold_cv(
    data: &Dataset,
    loss: Loss,
    reg: &Regularizer,
    risk: RiskFunction,
    k: usize,
    seed: u64,
    fit_cfg: &FitConfig,
) -> Result<RiskReport, EstimatorError> {
    let n = data.n_samples();
    if k < 2 || k > n {
        return Err(EstimatorError::InvalidArgument(format!(
            "K must be in [2, n]; got K={k}, n={n}"
        )));
    }
    let start = Instant::now();
    let folds = kfold_partition(n, k, seed);

    let fold_results: Result<Vec<(f64, usize)>, EstimatorError> = folds
        .par_iter()
        .enumerate()
        .map(|(f, fold)| {
            let mut train: Vec<usize> = Vec::with_capacity(n - fold.len());
            let mut held = vec![false; n];
            for &i in fold {
                held[i] = true;
            }
            for i in 0..n {
                if !held[i] {
                    train.push(i);
                }
            }
            let sub = data.select_rows(&train);
            let model = fit(&sub, loss, reg, fit_cfg)
                .map_err(|e| EstimatorError::FoldFit { fold: f, source: Box::new(e) })?;
            let mut total = 0.0;
            for &i in fold {
                let pred = data.x.row_dot(i, model.coefficients.view());
                total += risk.evaluate(data.y[i], pred);
            }
            Ok((total, fold.len()))
        })
        .collect();
    let fold_results = fold_results?;
    let total: f64 = fold_results.iter().map(|&(t, _)| t).sum();
    let estimate = total / n as f64;
    let method = if k == n { EstimatorMethod::LooCv } else { EstimatorMethod::KfoldCv };
    Ok(RiskReport {
        estimate,
        slope: None,
        curve: vec![(k, estimate)],
        method,
        diagnostics: Diagnostics {
            solve_count: k,
            jvp_applies: 0,
            wall_time_s: Some(start.elapsed().as_secs_f64()),
            seed: Some(seed),
            warnings: Vec::new(),
        },
    })
}

/// Convenience: exact-ALO riskreport from the ridge shortcut (coincides with
/// refit LOO for ridge regression).
pub fn ridge_loo_report(
    data: &Dataset,
    lambda: f64,
    risk: RiskFunction,
) -> Result<RiskReport, EstimatorError> {
    let start = Instant::now();
    let loo = ridge_loo_shortcut(data, lambda)?;
    let estimate = plugin_risk(&data.y, &loo, risk);
    Ok(RiskReport {
        estimate,
        slope: None,
        curve: vec![(data.n_samples(), estimate)],
        method: EstimatorMethod::RidgeLoo,
        diagnostics: Diagnostics {
            solve_count: 1,
            jvp_applies: data.n_samples(),
            wall_time_s: Some(start.elapsed().as_secs_f64()),
            seed: None,
            warnings: Vec::new(),
        },
    })
}
