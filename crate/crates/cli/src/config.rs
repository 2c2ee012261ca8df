//! Run configuration: a TOML file with full defaults and strict keys, so a
//! config written by `print-config` always round-trips.

use randalo_core::linops::SolveMethod;
use randalo_core::randalo::RiskFunction;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataFormat {
    DenseCsv,
    SvmlightSparse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Path to the data file.
    pub source: String,
    pub format: DataFormat,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { source: String::new(), format: DataFormat::DenseCsv }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelFamily {
    Ridge,
    Lasso,
    ElasticNet,
    FirstDiff,
    GroupLasso,
    LogisticRidge,
    KernelRidge,
    KernelLogistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub family: ModelFamily,
    /// Primary regularization weight: ℓ2 for ridge/elastic-net/kernel
    /// families, ℓ1 for lasso, the penalty weight for first-diff and
    /// group-lasso.
    pub lambda: f64,
    /// ℓ1 weight of the elastic net.
    pub theta: f64,
    /// RBF kernel width exp(−γ‖x−x′‖²); 0 means the linear kernel.
    pub gamma: f64,
    /// Consecutive group sizes for group-lasso; must sum to the feature count.
    pub groups: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { family: ModelFamily::Ridge, lambda: 1.0, theta: 0.0, gamma: 0.0, groups: vec![] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    Randalo,
    BksAlo,
    ExactAlo,
    KfoldCv,
    LooCv,
    RidgeLoo,
}

impl std::fmt::Display for MethodName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            MethodName::Randalo => "randalo",
            MethodName::BksAlo => "bks_alo",
            MethodName::ExactAlo => "exact_alo",
            MethodName::KfoldCv => "kfold_cv",
            MethodName::LooCv => "loo_cv",
            MethodName::RidgeLoo => "ridge_loo",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    pub method: MethodName,
    /// Jacobian–vector products for randalo / bks-alo.
    pub m: usize,
    /// Folds for kfold-cv.
    pub k: usize,
    pub seed: u64,
    /// Subset sizes m′ for the debias regression; empty means every integer
    /// in [⌈m/2⌉, m].
    pub subset_schedule: Vec<usize>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self { method: MethodName::Randalo, m: 100, k: 5, seed: 0, subset_schedule: vec![] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub method: SolveMethod,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// 0 means the default cap of 10·dim.
    pub max_iter: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self { method: SolveMethod::Auto, rel_tol: 1e-8, abs_tol: 1e-10, max_iter: 0 }
    }
}

impl SolverSection {
    pub fn to_core(&self) -> randalo_core::linops::SolverConfig {
        randalo_core::linops::SolverConfig {
            abs_tol: self.abs_tol,
            rel_tol: self.rel_tol,
            max_iter: if self.max_iter == 0 { None } else { Some(self.max_iter) },
            method: self.method,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitSection {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 200_000 }
    }
}

impl FitSection {
    pub fn to_core(&self) -> randalo_core::model::FitConfig {
        randalo_core::model::FitConfig {
            tol: self.tol,
            max_iter: self.max_iter,
            ..randalo_core::model::FitConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RiskSection {
    pub function: RiskFunction,
}

impl Default for RiskSection {
    fn default() -> Self {
        Self { function: RiskFunction::SquaredError }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Empty writes to stdout.
    pub path: String,
    pub format: OutputFormat,
    /// Record wall times in rows; disable for byte-stable output.
    pub measure_time: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { path: String::new(), format: OutputFormat::Csv, measure_time: true }
    }
}

/// Complete configuration of one `estimate` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub estimator: EstimatorConfig,
    pub solver: SolverSection,
    pub fit: FitSection,
    pub risk: RiskSection,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &str) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_string(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.solver.rel_tol <= 0.0 || self.solver.abs_tol <= 0.0 {
            return Err(ConfigError::Invalid("solver tolerances must be positive".into()));
        }
        if self.fit.tol <= 0.0 {
            return Err(ConfigError::Invalid("fit.tol must be positive".into()));
        }
        if self.model.lambda < 0.0 || self.model.theta < 0.0 || self.model.gamma < 0.0 {
            return Err(ConfigError::Invalid("model weights must be nonnegative".into()));
        }
        match self.estimator.method {
            MethodName::Randalo if self.estimator.m < 4 => {
                Err(ConfigError::Invalid("estimator.m must be at least 4 for randalo".into()))
            }
            MethodName::BksAlo if self.estimator.m < 2 => {
                Err(ConfigError::Invalid("estimator.m must be at least 2 for bks-alo".into()))
            }
            MethodName::KfoldCv if self.estimator.k < 2 => {
                Err(ConfigError::Invalid("estimator.k must be at least 2".into()))
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = RunConfig::from_toml("[model]\nfamily = \"lasso\"\nlambda = 3.0\n").unwrap();
        assert_eq!(cfg.model.family, ModelFamily::Lasso);
        assert_eq!(cfg.model.lambda, 3.0);
        assert_eq!(cfg.estimator.m, 100);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::from_toml("[estimator]\nmethod = \"randalo\"\nbogus = 1\n");
        assert!(err.is_err());
        let msg = format!("{}", err.unwrap_err());
        assert!(msg.contains("bogus"), "error should name the field: {msg}");
    }

    #[test]
    fn bad_method_named_in_error() {
        let err = RunConfig::from_toml("[estimator]\nmethod = \"gcv\"\n");
        assert!(err.is_err());
        let msg = format!("{}", err.unwrap_err());
        assert!(msg.contains("method") || msg.contains("gcv"), "{msg}");
    }

    #[test]
    fn semantic_validation() {
        let err = RunConfig::from_toml("[estimator]\nmethod = \"randalo\"\nm = 2\n");
        assert!(err.is_err());
        let err = RunConfig::from_toml("[solver]\nrel_tol = 0.0\n");
        assert!(err.is_err());
    }
}
