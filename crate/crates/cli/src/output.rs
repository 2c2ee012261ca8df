//! Result-row serialization. Data rows are byte-stable for a fixed config
//! and seed; anything time-dependent lives on '#'-prefixed metadata lines
//! (or in the wall-time column, which the timing switch can null out).

use randalo_core::experiments::ExperimentRow;
use std::io::Write;

pub const CSV_HEADER: &str = "experiment,seed,method,parameter,risk_estimate,conditional_risk,relative_bias,wall_time_s,solve_count,warnings";

fn opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => String::new(),
    }
}

fn csv_quote(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn write_csv<W: Write + ?Sized>(
    out: &mut W,
    rows: &[ExperimentRow],
    metadata: &[String],
) -> std::io::Result<()> {
    for line in metadata {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            csv_quote(&r.experiment),
            r.seed,
            csv_quote(&r.method),
            csv_quote(&r.parameter),
            opt(r.risk_estimate),
            opt(r.conditional_risk),
            opt(r.relative_bias),
            opt(r.wall_time_s),
            r.solve_count,
            csv_quote(&r.warnings),
        )?;
    }
    Ok(())
}

pub fn write_jsonl<W: Write + ?Sized>(
    out: &mut W,
    rows: &[ExperimentRow],
    metadata: &[String],
) -> std::io::Result<()> {
    for line in metadata {
        writeln!(out, "# {line}")?;
    }
    for r in rows {
        let json = serde_json::to_string(r).expect("row serializes");
        writeln!(out, "{json}")?;
    }
    Ok(())
}

/// Per-method mean/SD of relative bias and mean wall time, plus time
/// relative to the recorded fit time.
pub fn summarize(rows: &[ExperimentRow]) -> Vec<String> {
    use std::collections::BTreeMap;
    let mut by_method: BTreeMap<String, Vec<&ExperimentRow>> = BTreeMap::new();
    for r in rows {
        by_method.entry(r.method.clone()).or_default().push(r);
    }
    // Mean fit time per seed for the relative-time convention.
    let fit_times: Vec<f64> = rows
        .iter()
        .filter(|r| r.method == "fit")
        .filter_map(|r| r.wall_time_s)
        .collect();
    let mean_fit = if fit_times.is_empty() {
        None
    } else {
        Some(fit_times.iter().sum::<f64>() / fit_times.len() as f64)
    };

    let mut lines = vec![format!(
        "{:<22} {:>8} {:>14} {:>12} {:>12} {:>12}",
        "method", "cells", "mean_rel_bias", "sd_rel_bias", "mean_time_s", "rel_time"
    )];
    for (method, group) in by_method {
        let biases: Vec<f64> = group.iter().filter_map(|r| r.relative_bias).collect();
        let (mean_b, sd_b) = if biases.is_empty() {
            (None, None)
        } else {
            let m = biases.iter().sum::<f64>() / biases.len() as f64;
            let var = biases.iter().map(|b| (b - m) * (b - m)).sum::<f64>()
                / (biases.len().max(2) as f64 - 1.0);
            (Some(m), Some(var.sqrt()))
        };
        let times: Vec<f64> = group.iter().filter_map(|r| r.wall_time_s).collect();
        let mean_t = if times.is_empty() {
            None
        } else {
            Some(times.iter().sum::<f64>() / times.len() as f64)
        };
        let rel_t = match (mean_t, mean_fit) {
            (Some(t), Some(f)) if f > 0.0 => Some(t / f),
            _ => None,
        };
        let fmt = |v: Option<f64>| match v {
            Some(x) => format!("{x:.6}"),
            None => "-".to_string(),
        };
        lines.push(format!(
            "{:<22} {:>8} {:>14} {:>12} {:>12} {:>12}",
            method,
            group.len(),
            fmt(mean_b),
            fmt(sd_b),
            fmt(mean_t),
            fmt(rel_t)
        ));
    }
    lines
}
