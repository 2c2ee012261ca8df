//! The `estimate` and `bench` commands.

use crate::config::{MethodName, ModelConfig, ModelFamily, RunConfig};
use crate::ingest::{ingest, IngestError};
use ndarray::{Array1, Array2};
use randalo_core::data::Dataset;
use randalo_core::experiments::{
    run_experiment, ExperimentConfig, ExperimentError, ExperimentName, ExperimentRow,
};
use randalo_core::jacobian::{JacobianError, JvpOracle};
use randalo_core::model::{
    fit, fit_kernel, ActiveSetPolicy, FitConfig, FittedModel, Loss, ModelError, Regularizer,
};
use randalo_core::randalo::{
    bks_alo, exact_alo, kfold_cv, kfold_partition, plugin_risk, randalo, ridge_loo_report,
    EstimatorError, RiskFunction, RiskReport,
};
use std::sync::Arc;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("jacobian: {0}")]
    Jacobian(#[from] JacobianError),
    #[error("estimator: {0}")]
    Estimator(#[from] EstimatorError),
    #[error("experiment: {0}")]
    Experiment(#[from] ExperimentError),
    #[error("{0}")]
    Invalid(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn build_regularizer(model: &ModelConfig, p: usize) -> Result<(Loss, Regularizer), RunError> {
    let reg = match model.family {
        ModelFamily::Ridge => Regularizer::ridge(model.lambda),
        ModelFamily::Lasso => Regularizer::lasso(model.lambda),
        ModelFamily::ElasticNet => Regularizer::elastic_net(model.lambda, model.theta),
        ModelFamily::FirstDiff => Regularizer::first_difference(model.lambda, p),
        ModelFamily::GroupLasso => {
            let total: usize = model.groups.iter().sum();
            if model.groups.is_empty() || total != p {
                return Err(RunError::Invalid(format!(
                    "model.groups sizes must sum to the feature count {p}, got {total}"
                )));
            }
            let mut groups = Vec::with_capacity(model.groups.len());
            let mut at = 0;
            for &size in &model.groups {
                groups.push((at..at + size).collect());
                at += size;
            }
            Regularizer::group_lasso(groups, model.lambda)
        }
        ModelFamily::LogisticRidge => Regularizer::ridge(model.lambda),
        ModelFamily::KernelRidge | ModelFamily::KernelLogistic => {
            Regularizer::ridge(model.lambda)
        }
    };
    let loss = match model.family {
        ModelFamily::LogisticRidge | ModelFamily::KernelLogistic => Loss::Logistic,
        _ => Loss::Squared,
    };
    Ok((loss, reg))
}

/// Dense Gram matrix: RBF when γ > 0, linear otherwise.
fn gram_matrix(x: &Array2<f64>, gamma: f64) -> Array2<f64> {
    if gamma == 0.0 {
        return x.dot(&x.t());
    }
    let n = x.nrows();
    let sq: Vec<f64> = (0..n).map(|i| x.row(i).dot(&x.row(i))).collect();
    let inner = x.dot(&x.t());
    Array2::from_shape_fn((n, n), |(i, j)| (-gamma * (sq[i] + sq[j] - 2.0 * inner[[i, j]])).exp())
}

fn is_kernel(family: ModelFamily) -> bool {
    matches!(family, ModelFamily::KernelRidge | ModelFamily::KernelLogistic)
}

/// K-fold CV for kernel models: the Gram matrix is re-sliced per fold and
/// held-out predictions use the cross-block K[test, train].
#[allow(clippy::too_many_arguments)]
fn kernel_kfold_cv(
    gram: &Array2<f64>,
    y: &Array1<f64>,
    loss: Loss,
    lambda: f64,
    risk: RiskFunction,
    k: usize,
    seed: u64,
    fit_cfg: &FitConfig,
) -> Result<RiskReport, RunError> {
    let n = y.len();
    if k < 2 || k > n {
        return Err(RunError::Invalid(format!("K must be in [2, n]; got K={k}, n={n}")));
    }
    let start = Instant::now();
    let folds = kfold_partition(n, k, seed);
    let mut total = 0.0;
    for fold in &folds {
        let mut held = vec![false; n];
        for &i in fold {
            held[i] = true;
        }
        let train: Vec<usize> = (0..n).filter(|&i| !held[i]).collect();
        let sub_gram = Arc::new(Array2::from_shape_fn((train.len(), train.len()), |(a, b)| {
            gram[[train[a], train[b]]]
        }));
        let sub_y = Array1::from_iter(train.iter().map(|&i| y[i]));
        let model = fit_kernel(&sub_gram, &sub_y, loss, lambda, fit_cfg)?;
        for &i in fold {
            let pred: f64 =
                train.iter().enumerate().map(|(a, &t)| gram[[i, t]] * model.coefficients[a]).sum();
            total += risk.evaluate(y[i], pred);
        }
    }
    Ok(RiskReport {
        estimate: total / n as f64,
        slope: None,
        curve: vec![(k, total / n as f64)],
        method: if k == n {
            randalo_core::randalo::EstimatorMethod::LooCv
        } else {
            randalo_core::randalo::EstimatorMethod::KfoldCv
        },
        diagnostics: randalo_core::randalo::Diagnostics {
            solve_count: k,
            jvp_applies: 0,
            wall_time_s: Some(start.elapsed().as_secs_f64()),
            seed: Some(seed),
            warnings: Vec::new(),
        },
    })
}

/// Fit the configured model and run the configured estimator, returning one
/// result row.
pub fn estimate_rows(cfg: &RunConfig, data: &Dataset) -> Result<Vec<ExperimentRow>, RunError> {
    let p = data.n_features();
    let (loss, reg) = build_regularizer(&cfg.model, p)?;
    let fit_cfg = cfg.fit.to_core();
    let solver_cfg = cfg.solver.to_core();
    let policy = ActiveSetPolicy::default();
    let risk = cfg.risk.function;
    let est = &cfg.estimator;

    let mut rows = Vec::new();
    let fit_start = Instant::now();

    enum Fitted {
        Primal(FittedModel),
        Kernel { model: FittedModel, gram: Arc<Array2<f64>> },
    }

    let fitted = if is_kernel(cfg.model.family) {
        let gram = Arc::new(gram_matrix(&data.x.to_dense(), cfg.model.gamma));
        let model = fit_kernel(&gram, &data.y, loss, cfg.model.lambda, &fit_cfg)?;
        Fitted::Kernel { model, gram }
    } else {
        Fitted::Primal(fit(data, loss, &reg, &fit_cfg)?)
    };
    let fit_time = fit_start.elapsed().as_secs_f64();
    rows.push(ExperimentRow {
        experiment: "estimate".into(),
        seed: est.seed,
        method: "fit".into(),
        parameter: String::new(),
        risk_estimate: None,
        conditional_risk: None,
        relative_bias: None,
        wall_time_s: if cfg.output.measure_time { Some(fit_time) } else { None },
        solve_count: 1,
        warnings: String::new(),
    });

    let schedule: Option<&[usize]> =
        if est.subset_schedule.is_empty() { None } else { Some(&est.subset_schedule) };

    let (report, parameter): (RiskReport, String) = match (&fitted, est.method) {
        (Fitted::Primal(model), MethodName::Randalo) => {
            let oracle = JvpOracle::build(model, data, &policy, &solver_cfg)?;
            let mut report =
                randalo(&data.y, &model.predictions, &oracle, loss, risk, est.m, est.seed, schedule)?;
            report.diagnostics.solve_count = oracle.solve_counts().linear_solves();
            (report, format!("m={}", est.m))
        }
        (Fitted::Primal(model), MethodName::BksAlo) => {
            let oracle = JvpOracle::build(model, data, &policy, &solver_cfg)?;
            let mut report =
                bks_alo(&data.y, &model.predictions, &oracle, loss, risk, est.m, est.seed)?;
            report.diagnostics.solve_count = oracle.solve_counts().linear_solves();
            (report, format!("m={}", est.m))
        }
        (Fitted::Primal(model), MethodName::ExactAlo) => {
            let oracle = JvpOracle::build(model, data, &policy, &solver_cfg)?;
            let mut report = exact_alo(&data.y, &model.predictions, &oracle, loss, risk)?;
            report.diagnostics.solve_count = oracle.solve_counts().linear_solves();
            (report, String::new())
        }
        (Fitted::Primal(_), MethodName::KfoldCv) => (
            kfold_cv(data, loss, &reg, risk, est.k, est.seed, &fit_cfg)?,
            format!("K={}", est.k),
        ),
        (Fitted::Primal(_), MethodName::LooCv) => (
            kfold_cv(data, loss, &reg, risk, data.n_samples(), est.seed, &fit_cfg)?,
            format!("K={}", data.n_samples()),
        ),
        (Fitted::Primal(_), MethodName::RidgeLoo) => {
            if cfg.model.family != ModelFamily::Ridge {
                return Err(RunError::Invalid(
                    "estimator.method ridge-loo requires model.family = \"ridge\"".into(),
                ));
            }
            (ridge_loo_report(data, cfg.model.lambda, risk)?, String::new())
        }
        (Fitted::Kernel { model, gram }, method) => match method {
            MethodName::Randalo => {
                let oracle = JvpOracle::kernel(model, Arc::clone(gram), &solver_cfg)?;
                let mut report = randalo(
                    &data.y, &model.predictions, &oracle, loss, risk, est.m, est.seed, schedule,
                )?;
                report.diagnostics.solve_count = oracle.solve_counts().linear_solves();
                (report, format!("m={}", est.m))
            }
            MethodName::BksAlo => {
                let oracle = JvpOracle::kernel(model, Arc::clone(gram), &solver_cfg)?;
                let mut report =
                    bks_alo(&data.y, &model.predictions, &oracle, loss, risk, est.m, est.seed)?;
                report.diagnostics.solve_count = oracle.solve_counts().linear_solves();
                (report, format!("m={}", est.m))
            }
            MethodName::ExactAlo => {
                let oracle = JvpOracle::kernel(model, Arc::clone(gram), &solver_cfg)?;
                let mut report = exact_alo(&data.y, &model.predictions, &oracle, loss, risk)?;
                report.diagnostics.solve_count = oracle.solve_counts().linear_solves();
                (report, String::new())
            }
            MethodName::KfoldCv => (
                kernel_kfold_cv(gram, &data.y, loss, cfg.model.lambda, risk, est.k, est.seed, &fit_cfg)?,
                format!("K={}", est.k),
            ),
            MethodName::LooCv => (
                kernel_kfold_cv(
                    gram,
                    &data.y,
                    loss,
                    cfg.model.lambda,
                    risk,
                    data.n_samples(),
                    est.seed,
                    &fit_cfg,
                )?,
                format!("K={}", data.n_samples()),
            ),
            MethodName::RidgeLoo => {
                return Err(RunError::Invalid(
                    "estimator.method ridge-loo is a primal-only shortcut".into(),
                ))
            }
        },
    };

    // In-sample risk of the fit, for context alongside the estimate.
    let in_sample = match &fitted {
        Fitted::Primal(model) => plugin_risk(&data.y, &model.predictions, risk),
        Fitted::Kernel { model, .. } => plugin_risk(&data.y, &model.predictions, risk),
    };
    rows.push(ExperimentRow {
        experiment: "estimate".into(),
        seed: est.seed,
        method: "train_risk".into(),
        parameter: String::new(),
        risk_estimate: Some(in_sample),
        conditional_risk: None,
        relative_bias: None,
        wall_time_s: None,
        solve_count: 0,
        warnings: String::new(),
    });

    rows.push(ExperimentRow {
        experiment: "estimate".into(),
        seed: est.seed,
        method: format!("{}", est.method),
        parameter,
        risk_estimate: Some(report.estimate),
        conditional_risk: None,
        relative_bias: None,
        wall_time_s: if cfg.output.measure_time { report.diagnostics.wall_time_s } else { None },
        solve_count: report.diagnostics.solve_count,
        warnings: report.diagnostics.warnings.join("; "),
    });
    Ok(rows)
}

/// Load the data named in the config and run the estimator.
pub fn cmd_estimate(cfg: &RunConfig) -> Result<Vec<ExperimentRow>, RunError> {
    if cfg.data.source.is_empty() {
        return Err(RunError::Invalid("data.source is required for estimate".into()));
    }
    let data = ingest(std::path::Path::new(&cfg.data.source), cfg.data.format)?;
    estimate_rows(cfg, &data)
}

/// Run a named benchmark experiment.
pub fn cmd_bench(
    experiment: &str,
    scale: f64,
    seeds: usize,
    measure_time: bool,
) -> Result<Vec<ExperimentRow>, RunError> {
    let name: ExperimentName = experiment.parse()?;
    let cfg = ExperimentConfig {
        scale,
        seeds: (0..seeds as u64).collect(),
        measure_time,
        ..ExperimentConfig::default()
    };
    Ok(run_experiment(name, &cfg)?)
}
