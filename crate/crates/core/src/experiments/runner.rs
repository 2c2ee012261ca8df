//! Named benchmark experiments: generate data per recipe, fit, run every
//! estimator in the grid, and score each against the conditional-risk oracle.

use super::clt::{clt_diagnostics, CltProblem, CltSetup};
use super::cond_risk::conditional_risk;
use super::synthetic::{generate, SyntheticError, SyntheticSpec};
use crate::data::Dataset;
use crate::jacobian::{JacobianError, JvpOracle};
use crate::linops::SolverConfig;
use crate::model::{
    fit, ActiveSetPolicy, FitConfig, FittedModel, Loss, ModelError, Regularizer,
};
use crate::randalo::{
    bks_alo, exact_alo, kfold_cv, randalo, EstimatorError, RiskFunction, RiskReport,
};
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown experiment name: {0}")]
    UnknownExperiment(String),
    #[error("scale must be positive, got {0}")]
    InvalidScale(f64),
    #[error("experiment {experiment} seed {seed}: {source}")]
    Cell { experiment: String, seed: u64, source: Box<dyn std::error::Error + Send + Sync> },
}

fn cell_err<E: std::error::Error + Send + Sync + 'static>(
    experiment: &str,
    seed: u64,
) -> impl FnOnce(E) -> ExperimentError + '_ {
    move |e| ExperimentError::Cell {
        experiment: experiment.to_string(),
        seed,
        source: Box::new(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentName {
    LassoTradeoff,
    LassoScaling,
    FirstDiff,
    LogisticRidge,
    MultivariateT,
    Categorical,
    HyperparamSweep,
    CltValidation,
}

impl std::str::FromStr for ExperimentName {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lasso_tradeoff" => Ok(Self::LassoTradeoff),
            "lasso_scaling" => Ok(Self::LassoScaling),
            "first_diff" => Ok(Self::FirstDiff),
            "logistic_ridge" => Ok(Self::LogisticRidge),
            "multivariate_t" => Ok(Self::MultivariateT),
            "categorical" => Ok(Self::Categorical),
            "hyperparam_sweep" => Ok(Self::HyperparamSweep),
            "clt_validation" => Ok(Self::CltValidation),
            other => Err(ExperimentError::UnknownExperiment(other.to_string())),
        }
    }
}

impl std::fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::LassoTradeoff => "lasso_tradeoff",
            Self::LassoScaling => "lasso_scaling",
            Self::FirstDiff => "first_diff",
            Self::LogisticRidge => "logistic_ridge",
            Self::MultivariateT => "multivariate_t",
            Self::Categorical => "categorical",
            Self::HyperparamSweep => "hyperparam_sweep",
            Self::CltValidation => "clt_validation",
        };
        write!(f, "{s}")
    }
}

/// Grid controls; `None` fields use the experiment's own defaults.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub scale: f64,
    pub seeds: Vec<u64>,
    /// Record wall times in rows (disable for byte-stable output).
    pub measure_time: bool,
    pub k_list: Option<Vec<usize>>,
    pub m_list: Option<Vec<usize>>,
    pub lambda0_list: Option<Vec<f64>>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scale: 0.2,
            seeds: (0..10).collect(),
            measure_time: true,
            k_list: None,
            m_list: None,
            lambda0_list: None,
        }
    }
}

/// One output cell of an experiment run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub experiment: String,
    pub seed: u64,
    pub method: String,
    pub parameter: String,
    pub risk_estimate: Option<f64>,
    pub conditional_risk: Option<f64>,
    pub relative_bias: Option<f64>,
    pub wall_time_s: Option<f64>,
    pub solve_count: usize,
    pub warnings: String,
}

fn scaled(base: usize, scale: f64) -> usize {
    ((base as f64 * scale).round() as usize).max(4)
}

fn report_row(
    experiment: &str,
    seed: u64,
    method: &str,
    parameter: &str,
    report: &RiskReport,
    cond: Option<f64>,
    measure_time: bool,
) -> ExperimentRow {
    let relative_bias = cond.map(|c| (report.estimate - c) / c);
    ExperimentRow {
        experiment: experiment.to_string(),
        seed,
        method: method.to_string(),
        parameter: parameter.to_string(),
        risk_estimate: Some(report.estimate),
        conditional_risk: cond,
        relative_bias,
        wall_time_s: if measure_time { report.diagnostics.wall_time_s } else { None },
        solve_count: report.diagnostics.solve_count,
        warnings: report.diagnostics.warnings.join("; "),
    }
}

/// Estimator grid for one generated-and-fitted instance.
pub struct CellGrid {
    pub experiment: String,
    pub seed: u64,
    pub parameter: String,
    pub regularizer: Regularizer,
    pub loss: Loss,
    pub risk: RiskFunction,
    pub k_list: Vec<usize>,
    pub m_list: Vec<usize>,
    pub exact_alo_limit: usize,
}

/// Fit one instance and run every estimator in the grid against the
/// conditional-risk oracle.
pub fn run_cell(
    grid: &CellGrid,
    data: &Dataset,
    cond: Option<f64>,
    measure_time: bool,
) -> Result<(Vec<ExperimentRow>, FittedModel), ExperimentError> {
    let exp = grid.experiment.as_str();
    let seed = grid.seed;
    let fit_cfg = FitConfig::default();
    let solver_cfg = SolverConfig::default();
    let policy = ActiveSetPolicy::default();
    let mut rows = Vec::new();

    let fit_start = Instant::now();
    let model = fit(data, grid.loss, &grid.regularizer, &fit_cfg)
        .map_err(cell_err::<ModelError>(exp, seed))?;
    let fit_time = fit_start.elapsed().as_secs_f64();
    rows.push(ExperimentRow {
        experiment: exp.to_string(),
        seed,
        method: "fit".into(),
        parameter: grid.parameter.clone(),
        risk_estimate: None,
        conditional_risk: cond,
        relative_bias: None,
        wall_time_s: if measure_time { Some(fit_time) } else { None },
        solve_count: 1,
        warnings: String::new(),
    });

    for &k in &grid.k_list {
        if k < 2 || k > data.n_samples() {
            continue;
        }
        let report = kfold_cv(data, grid.loss, &grid.regularizer, grid.risk, k, seed, &fit_cfg)
            .map_err(cell_err::<EstimatorError>(exp, seed))?;
        let param = format!("{};K={k}", grid.parameter);
        rows.push(report_row(exp, seed, "kfold_cv", param.trim_start_matches(';'), &report, cond, measure_time));
    }

    let oracle = JvpOracle::build(&model, data, &policy, &solver_cfg)
        .map_err(cell_err::<JacobianError>(exp, seed))?;
    // Setup row: the cached factorization is the full-dimension solve that
    // all probe applications amortize.
    rows.push(ExperimentRow {
        experiment: exp.to_string(),
        seed,
        method: "jvp_oracle".into(),
        parameter: format!("route={}", oracle.route()),
        risk_estimate: None,
        conditional_risk: cond,
        relative_bias: None,
        wall_time_s: None,
        solve_count: oracle.solve_counts().linear_solves(),
        warnings: String::new(),
    });
    for &m in &grid.m_list {
        let report = randalo(
            &data.y,
            &model.predictions,
            &oracle,
            grid.loss,
            grid.risk,
            m,
            seed,
            None,
        )
        .map_err(cell_err::<EstimatorError>(exp, seed))?;
        let param = format!("{};m={m}", grid.parameter);
        rows.push(report_row(exp, seed, "randalo", param.trim_start_matches(';'), &report, cond, measure_time));

        let report =
            bks_alo(&data.y, &model.predictions, &oracle, grid.loss, grid.risk, m, seed)
                .map_err(cell_err::<EstimatorError>(exp, seed))?;
        rows.push(report_row(exp, seed, "bks_alo", param.trim_start_matches(';'), &report, cond, measure_time));
    }

    if data.n_samples() <= grid.exact_alo_limit {
        let report = exact_alo(&data.y, &model.predictions, &oracle, grid.loss, grid.risk)
            .map_err(cell_err::<EstimatorError>(exp, seed))?;
        rows.push(report_row(exp, seed, "exact_alo", &grid.parameter, &report, cond, measure_time));
    }

    Ok((rows, model))
}

fn lasso_like_cell(
    name: &str,
    spec: &SyntheticSpec,
    regularizer: Regularizer,
    loss: Loss,
    risk: RiskFunction,
    k_list: &[usize],
    m_list: &[usize],
    param: String,
    measure_time: bool,
) -> Result<Vec<ExperimentRow>, ExperimentError> {
    let g = generate(spec).map_err(cell_err::<SyntheticError>(name, spec.seed))?;
    let grid = CellGrid {
        experiment: name.to_string(),
        seed: spec.seed,
        parameter: param,
        regularizer,
        loss,
        risk,
        k_list: k_list.to_vec(),
        m_list: m_list.to_vec(),
        exact_alo_limit: 1200,
    };
    let (mut rows, model) = run_cell(&grid, &g.data, None, measure_time)?;
    // Conditional risk needs the fitted coefficients; patch it in after.
    let cond = conditional_risk(spec, &g.beta_star, &model.coefficients)
        .map_err(cell_err::<super::cond_risk::RiskOracleError>(name, spec.seed))?;
    for row in rows.iter_mut() {
        if row.risk_estimate.is_some() {
            row.conditional_risk = Some(cond);
            row.relative_bias = row.risk_estimate.map(|e| (e - cond) / cond);
        } else {
            row.conditional_risk = Some(cond);
        }
    }
    Ok(rows)
}

/// Run a named experiment over all seeds, emitting one row per
/// (seed, method, hyperparameter) cell, ordered by (seed, method, parameter).
pub fn run_experiment(
    name: ExperimentName,
    cfg: &ExperimentConfig,
) -> Result<Vec<ExperimentRow>, ExperimentError> {
    if !(cfg.scale > 0.0) {
        return Err(ExperimentError::InvalidScale(cfg.scale));
    }
    let f = cfg.scale;
    let mut rows = Vec::new();

    match name {
        ExperimentName::LassoTradeoff => {
            let n = scaled(5000, f);
            let k_list = cfg.k_list.clone().unwrap_or_else(|| vec![2, 3, 5, 10, 20]);
            let m_list =
                cfg.m_list.clone().unwrap_or_else(|| vec![10, 30, 100, 300, 1000, 3000]);
            for &seed in &cfg.seeds {
                let spec = SyntheticSpec::gaussian_lasso(n, n, seed);
                let lambda = (n as f64).sqrt();
                rows.extend(lasso_like_cell(
                    "lasso_tradeoff",
                    &spec,
                    Regularizer::lasso(lambda),
                    Loss::Squared,
                    RiskFunction::SquaredError,
                    &k_list,
                    &m_list,
                    format!("n={n}"),
                    cfg.measure_time,
                )?);
            }
        }
        ExperimentName::LassoScaling => {
            let k_list = cfg.k_list.clone().unwrap_or_else(|| vec![5]);
            let m_list = cfg.m_list.clone().unwrap_or_else(|| vec![50]);
            for base in [1000usize, 2000, 5000] {
                let n = scaled(base, f);
                for &seed in &cfg.seeds {
                    let spec = SyntheticSpec::gaussian_lasso(n, n, seed);
                    let lambda = (n as f64).sqrt();
                    rows.extend(lasso_like_cell(
                        "lasso_scaling",
                        &spec,
                        Regularizer::lasso(lambda),
                        Loss::Squared,
                        RiskFunction::SquaredError,
                        &k_list,
                        &m_list,
                        format!("n={n}"),
                        cfg.measure_time,
                    )?);
                }
            }
        }
        ExperimentName::FirstDiff => {
            let n = scaled(1000, f);
            let k_list = cfg.k_list.clone().unwrap_or_else(|| vec![5]);
            let m_list = cfg.m_list.clone().unwrap_or_else(|| vec![50]);
            for &seed in &cfg.seeds {
                let spec = SyntheticSpec::first_difference(n, n, seed);
                let lambda = n as f64;
                rows.extend(lasso_like_cell(
                    "first_diff",
                    &spec,
                    Regularizer::first_difference(lambda, n),
                    Loss::Squared,
                    RiskFunction::SquaredError,
                    &k_list,
                    &m_list,
                    format!("n={n}"),
                    cfg.measure_time,
                )?);
            }
        }
        ExperimentName::LogisticRidge => {
            let n = scaled(10_000, f);
            let p = scaled(4000, f);
            let k_list = cfg.k_list.clone().unwrap_or_else(|| vec![5]);
            let m_list = cfg.m_list.clone().unwrap_or_else(|| vec![50]);
            for &seed in &cfg.seeds {
                let spec = SyntheticSpec::logistic_ridge(n, p, seed);
                let lambda = n as f64;
                rows.extend(lasso_like_cell(
                    "logistic_ridge",
                    &spec,
                    Regularizer::ridge(lambda),
                    Loss::Logistic,
                    RiskFunction::Misclassification,
                    &k_list,
                    &m_list,
                    format!("n={n};p={p}"),
                    cfg.measure_time,
                )?);
            }
        }
        ExperimentName::MultivariateT => {
            let n = scaled(5000, f);
            let k_list = cfg.k_list.clone().unwrap_or_else(|| vec![5]);
            let m_list = cfg.m_list.clone().unwrap_or_else(|| vec![50]);
            for &seed in &cfg.seeds {
                let spec = SyntheticSpec::multivariate_t(n, n, seed);
                let lambda = (n as f64).sqrt();
                rows.extend(lasso_like_cell(
                    "multivariate_t",
                    &spec,
                    Regularizer::lasso(lambda),
                    Loss::Squared,
                    RiskFunction::SquaredError,
                    &k_list,
                    &m_list,
                    format!("n={n}"),
                    cfg.measure_time,
                )?);
            }
        }
        ExperimentName::Categorical => {
            let d = scaled(2000, f);
            let k = 10;
            let k_list = cfg.k_list.clone().unwrap_or_else(|| vec![5]);
            let m_list = cfg.m_list.clone().unwrap_or_else(|| vec![50]);
            for &seed in &cfg.seeds {
                let spec = SyntheticSpec::categorical(d, d, k, seed);
                let lambda = (d as f64).sqrt();
                rows.extend(lasso_like_cell(
                    "categorical",
                    &spec,
                    Regularizer::lasso(lambda),
                    Loss::Squared,
                    RiskFunction::SquaredError,
                    &k_list,
                    &m_list,
                    format!("d={d};k={k}"),
                    cfg.measure_time,
                )?);
            }
        }
        ExperimentName::HyperparamSweep => {
            let n = scaled(5000, f);
            let p = scaled(25_000, f);
            let s = scaled(250, f);
            let lambda0 = cfg
                .lambda0_list
                .clone()
                .unwrap_or_else(|| vec![5.0, 7.5, 10.0, 12.5, 15.0, 20.0, 25.0, 30.0]);
            let k_list = cfg.k_list.clone().unwrap_or_else(|| vec![5]);
            let m_list = cfg.m_list.clone().unwrap_or_else(|| vec![100]);
            for &seed in &cfg.seeds {
                let spec = SyntheticSpec {
                    sparsity: s,
                    noise_sd: 2.0,
                    ..SyntheticSpec::gaussian_lasso(n, p, seed)
                };
                let g = generate(&spec).map_err(cell_err::<SyntheticError>("hyperparam_sweep", seed))?;
                for &l0 in &lambda0 {
                    // Mean-loss convention in the sweep: λ = n·λ0/√p.
                    let lambda = n as f64 * l0 / (p as f64).sqrt();
                    let grid = CellGrid {
                        experiment: "hyperparam_sweep".into(),
                        seed,
                        parameter: format!("lambda0={l0}"),
                        regularizer: Regularizer::lasso(lambda),
                        loss: Loss::Squared,
                        risk: RiskFunction::SquaredError,
                        k_list: k_list.clone(),
                        m_list: m_list.clone(),
                        exact_alo_limit: 0,
                    };
                    let (mut cell_rows, model) = run_cell(&grid, &g.data, None, cfg.measure_time)?;
                    let cond = conditional_risk(&spec, &g.beta_star, &model.coefficients)
                        .map_err(cell_err::<super::cond_risk::RiskOracleError>("hyperparam_sweep", seed))?;
                    for row in cell_rows.iter_mut() {
                        row.conditional_risk = Some(cond);
                        row.relative_bias = row.risk_estimate.map(|e| (e - cond) / cond);
                    }
                    rows.extend(cell_rows);
                }
            }
        }
        ExperimentName::CltValidation => {
            let n = scaled(200, f.max(0.25));
            let p = scaled(150, f.max(0.25));
            let setup = CltSetup::standard(n, p);
            let seed = cfg.seeds.first().copied().unwrap_or(0);
            let start = Instant::now();
            let problem = CltProblem::generate(&setup, seed);
            let diag = clt_diagnostics(&problem, 10, 1000, seed.wrapping_add(1));
            let elapsed = start.elapsed().as_secs_f64();
            let stats = [
                ("z_mean", diag.z_mean),
                ("z_var", diag.z_var),
                ("adjacent_correlation", diag.adjacent_correlation),
                ("eta", diag.eta),
                ("nu", diag.nu),
            ];
            for (name_stat, value) in stats {
                rows.push(ExperimentRow {
                    experiment: "clt_validation".into(),
                    seed,
                    method: "clt_diagnostics".into(),
                    parameter: name_stat.to_string(),
                    risk_estimate: Some(value),
                    conditional_risk: None,
                    relative_bias: None,
                    wall_time_s: if cfg.measure_time { Some(elapsed) } else { None },
                    solve_count: 0,
                    warnings: String::new(),
                });
            }
        }
    }

    rows.sort_by(|a, b| {
        (a.seed, &a.method, &a.parameter).cmp(&(b.seed, &b.method, &b.parameter))
    });
    Ok(rows)
}
