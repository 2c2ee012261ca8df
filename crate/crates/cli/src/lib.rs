//! Library surface of the command-line front end, exposed so integration
//! tests can drive the same code paths as the binary.

pub mod config;
pub mod ingest;
pub mod output;
pub mod run;

use clap::{Parser, Subcommand};
use config::{OutputFormat, RunConfig};
use std::io::Write;

#[derive(Parser, Debug)]
#[command(name = "randalo", version, about = "Risk estimation for regularized linear models")]
pub struct Cli {
    /// Worker threads (fallback: RANDALO_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit a model on a dataset and estimate its risk.
    Estimate {
        /// TOML run configuration.
        #[arg(long)]
        config: std::path::PathBuf,
        /// Override the config's output path.
        #[arg(long)]
        output: Option<std::path::PathBuf>,
        /// Override the config's output format.
        #[arg(long, value_parser = ["csv", "jsonl"])]
        format: Option<String>,
        /// Suppress wall-time fields for byte-stable rows.
        #[arg(long)]
        no_timing: bool,
    },
    /// Run a named benchmark experiment and summarize it.
    Bench {
        /// One of: lasso_tradeoff, lasso_scaling, first_diff, logistic_ridge,
        /// multivariate_t, categorical, hyperparam_sweep, clt_validation.
        #[arg(long)]
        experiment: String,
        /// Problem-size multiplier relative to the reference sizes.
        #[arg(long, default_value_t = 0.2)]
        scale: f64,
        /// Number of trials (seeds 0..N).
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        #[arg(long)]
        output: Option<std::path::PathBuf>,
        #[arg(long, value_parser = ["csv", "jsonl"])]
        format: Option<String>,
        #[arg(long)]
        no_timing: bool,
    },
    /// Print the effective configuration (defaults merged with --config).
    PrintConfig {
        #[arg(long)]
        config: Option<std::path::PathBuf>,
    },
    /// Parse a dataset and report its shape.
    IngestCheck {
        #[arg(long)]
        path: std::path::PathBuf,
        #[arg(long, value_parser = ["dense-csv", "svmlight-sparse"], default_value = "dense-csv")]
        format: String,
    },
}

fn parse_format(s: &str) -> OutputFormat {
    match s {
        "jsonl" => OutputFormat::Jsonl,
        _ => OutputFormat::Csv,
    }
}

fn parse_data_format(s: &str) -> config::DataFormat {
    match s {
        "svmlight-sparse" => config::DataFormat::SvmlightSparse,
        _ => config::DataFormat::DenseCsv,
    }
}

fn configure_threads(cli_threads: Option<usize>) {
    let threads = cli_threads.or_else(|| {
        std::env::var("RANDALO_THREADS").ok().and_then(|v| v.parse::<usize>().ok())
    });
    if let Some(t) = threads {
        // Ignore failure: the global pool can only be set once per process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global();
    }
}

fn emit(
    rows: &[randalo_core::experiments::ExperimentRow],
    path: Option<&std::path::Path>,
    format: OutputFormat,
    metadata: Vec<String>,
) -> std::io::Result<()> {
    let write_to = |out: &mut dyn Write| match format {
        OutputFormat::Csv => output::write_csv(out, rows, &metadata),
        OutputFormat::Jsonl => output::write_jsonl(out, rows, &metadata),
    };
    match path {
        Some(p) => {
            let mut file = std::io::BufWriter::new(std::fs::File::create(p)?);
            write_to(&mut file)?;
            file.flush()
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write_to(&mut lock)
        }
    }
}

fn timestamp_metadata(cmd: &str, detail: &str) -> Vec<String> {
    let now = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    vec![
        format!("randalo {} v{}", cmd, env!("CARGO_PKG_VERSION")),
        detail.to_string(),
        format!("created_unix: {now}"),
    ]
}

/// Run the CLI; returns the process exit code.
pub fn run_cli(cli: Cli) -> i32 {
    configure_threads(cli.threads);
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(command: Command) -> Result<(), run::RunError> {
    match command {
        Command::Estimate { config, output: out_path, format, no_timing } => {
            let mut cfg = RunConfig::from_file(&config.display().to_string())?;
            if let Some(p) = &out_path {
                cfg.output.path = p.display().to_string();
            }
            if let Some(f) = &format {
                cfg.output.format = parse_format(f);
            }
            if no_timing {
                cfg.output.measure_time = false;
            }
            let rows = run::cmd_estimate(&cfg)?;
            let meta = timestamp_metadata(
                "estimate",
                &format!(
                    "model: {:?}, method: {}, seed: {}",
                    cfg.model.family, cfg.estimator.method, cfg.estimator.seed
                ),
            );
            let path = if cfg.output.path.is_empty() {
                None
            } else {
                Some(std::path::PathBuf::from(&cfg.output.path))
            };
            emit(&rows, path.as_deref(), cfg.output.format, meta)?;
            Ok(())
        }
        Command::Bench { experiment, scale, seeds, output: out_path, format, no_timing } => {
            let rows = run::cmd_bench(&experiment, scale, seeds, !no_timing)?;
            let meta = timestamp_metadata(
                "bench",
                &format!("experiment: {experiment}, scale: {scale}, seeds: {seeds}"),
            );
            let fmt = parse_format(format.as_deref().unwrap_or("csv"));
            emit(&rows, out_path.as_deref(), fmt, meta)?;
            // Human-readable summary on stdout (separate from the table when
            // the table goes to a file).
            if out_path.is_some() {
                for line in output::summarize(&rows) {
                    println!("{line}");
                }
            } else {
                for line in output::summarize(&rows) {
                    eprintln!("{line}");
                }
            }
            Ok(())
        }
        Command::PrintConfig { config } => {
            let cfg = match config {
                Some(path) => RunConfig::from_file(&path.display().to_string())?,
                None => RunConfig::default(),
            };
            println!("{}", cfg.to_toml());
            Ok(())
        }
        Command::IngestCheck { path, format } => {
            let data = ingest::ingest(&path, parse_data_format(&format))?;
            let storage = match &data.x {
                randalo_core::data::DesignMatrix::Dense(_) => "dense".to_string(),
                randalo_core::data::DesignMatrix::Sparse(m) => {
                    format!("sparse (nnz={})", m.nnz())
                }
            };
            println!(
                "rows: {}, features: {}, storage: {storage}",
                data.n_samples(),
                data.n_features()
            );
            Ok(())
        }
    }
}
