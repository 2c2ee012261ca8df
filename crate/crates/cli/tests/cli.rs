//! Black-box tests of the `randalo` binary and the CLI library surface.

use std::io::Write;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_randalo"))
}

fn write_file(dir: &std::path::Path, name: &str, contents: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    let mut f = std::fs::File::create(&path).unwrap();
    f.write_all(contents.as_bytes()).unwrap();
    path
}

fn tiny_csv() -> String {
    let mut rows = String::new();
    let mut state = 0.37f64;
    for i in 0..24 {
        // Deterministic pseudo-data, two features plus response.
        state = (state * 997.0 + i as f64).sin();
        let a = state;
        state = (state * 991.0).sin();
        let b = state;
        let y = 0.8 * a - 0.3 * b + 0.05 * (i as f64 * 0.7).sin();
        rows.push_str(&format!("{a},{b},{y}\n"));
    }
    rows
}

#[test]
fn estimate_smoke_on_tiny_csv() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_file(dir.path(), "tiny.csv", &tiny_csv());
    let cfg = write_file(
        dir.path(),
        "run.toml",
        &format!(
            "[data]\nsource = {:?}\n\n[model]\nfamily = \"ridge\"\nlambda = 0.5\n\n[estimator]\nmethod = \"randalo\"\nm = 50\nseed = 3\n",
            data.display()
        ),
    );
    let out = bin().args(["estimate", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let row = text.lines().find(|l| l.starts_with("estimate") && l.contains(",randalo,")).unwrap();
    let estimate: f64 = row.split(',').nth(4).unwrap().parse().unwrap();
    assert!(estimate.is_finite() && estimate > 0.0);
}

#[test]
fn loo_cv_matches_ridge_loo_shortcut() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_file(dir.path(), "tiny.csv", &tiny_csv());
    let run = |method: &str| -> f64 {
        let cfg = write_file(
            dir.path(),
            &format!("{method}.toml"),
            &format!(
                "[data]\nsource = {:?}\n\n[model]\nfamily = \"ridge\"\nlambda = 0.5\n\n[estimator]\nmethod = {method:?}\n",
                data.display()
            ),
        );
        let out = bin().args(["estimate", "--config"]).arg(&cfg).output().unwrap();
        assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
        let text = String::from_utf8(out.stdout).unwrap();
        let row = text
            .lines()
            .find(|l| l.starts_with("estimate") && l.contains(&format!(",{},", method.replace('-', "_"))))
            .unwrap_or_else(|| panic!("no row for {method} in:\n{text}"));
        row.split(',').nth(4).unwrap().parse().unwrap()
    };
    let loo = run("loo-cv");
    let shortcut = run("ridge-loo");
    assert!((loo - shortcut).abs() < 1e-8, "loo {loo} vs shortcut {shortcut}");
}

#[test]
fn unknown_method_is_rejected_with_field_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_file(dir.path(), "bad.toml", "[estimator]\nmethod = \"gcv\"\n");
    let out = bin().args(["estimate", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("method") || err.contains("gcv"), "stderr: {err}");
}

#[test]
fn bench_rejects_bad_scale() {
    let out = bin()
        .args(["bench", "--experiment", "clt_validation", "--scale", "0", "--seeds", "1"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("scale"));
}

#[test]
fn bench_unknown_experiment_fails() {
    let out = bin().args(["bench", "--experiment", "nope"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));
}

#[test]
fn bench_clt_validation_reports_stats() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("clt.csv");
    let out = bin()
        .args(["bench", "--experiment", "clt_validation", "--scale", "0.3", "--seeds", "1", "--output"])
        .arg(&out_path)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(&out_path).unwrap();
    for stat in ["z_mean", "z_var", "adjacent_correlation", "eta", "nu"] {
        assert!(table.contains(stat), "missing {stat} in table:\n{table}");
    }
}

#[test]
fn ingest_check_reports_sparse_shape() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_file(dir.path(), "s.svm", "-1 3:0.5\n1 1:2 2:1\n");
    let out = bin()
        .args(["ingest-check", "--format", "svmlight-sparse", "--path"])
        .arg(&data)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("rows: 2"));
    assert!(text.contains("features: 3"));
    assert!(text.contains("sparse"));
}

#[test]
fn categorical_roundtrip_is_bit_identical() {
    use randalo_cli::config::DataFormat;
    use randalo_cli::ingest::{ingest, write_dataset};
    use randalo_core::experiments::{generate, SyntheticSpec};

    let dir = tempfile::tempdir().unwrap();
    let g = generate(&SyntheticSpec::categorical(40, 30, 5, 17)).unwrap();
    let p1 = dir.path().join("cat1.svm");
    write_dataset(&p1, &g.data, DataFormat::SvmlightSparse).unwrap();
    let back = ingest(&p1, DataFormat::SvmlightSparse).unwrap();
    let p2 = dir.path().join("cat2.svm");
    write_dataset(&p2, &back, DataFormat::SvmlightSparse).unwrap();
    let bytes1 = std::fs::read(&p1).unwrap();
    let bytes2 = std::fs::read(&p2).unwrap();
    assert_eq!(bytes1, bytes2, "write→read→write must be bit-identical");
    assert_eq!(back.y, g.data.y);
}

#[test]
fn dense_roundtrip_preserves_values() {
    use randalo_cli::config::DataFormat;
    use randalo_cli::ingest::{ingest, write_dataset};
    use randalo_core::experiments::{generate, SyntheticSpec};

    let dir = tempfile::tempdir().unwrap();
    let g = generate(&SyntheticSpec::gaussian_lasso(20, 10, 3)).unwrap();
    let path = dir.path().join("g.csv");
    write_dataset(&path, &g.data, DataFormat::DenseCsv).unwrap();
    let back = ingest(&path, DataFormat::DenseCsv).unwrap();
    assert_eq!(back.x.to_dense(), g.data.x.to_dense());
    assert_eq!(back.y, g.data.y);
}

#[test]
fn print_config_round_trips_semantically() {
    let out = bin().args(["print-config"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let parsed = randalo_cli::config::RunConfig::from_toml(&text).unwrap();
    assert_eq!(parsed, randalo_cli::config::RunConfig::default());
}

#[test]
fn jsonl_output_format() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_file(dir.path(), "tiny.csv", &tiny_csv());
    let cfg = write_file(
        dir.path(),
        "run.toml",
        &format!(
            "[data]\nsource = {:?}\n\n[model]\nfamily = \"lasso\"\nlambda = 2.0\n\n[estimator]\nmethod = \"bks-alo\"\nm = 20\n",
            data.display()
        ),
    );
    let out = bin()
        .args(["estimate", "--format", "jsonl", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut saw_estimator_row = false;
    for line in text.lines().filter(|l| !l.starts_with('#')) {
        let row: serde_json::Value = serde_json::from_str(line).unwrap();
        if row["method"] == "bks_alo" {
            assert!(row["risk_estimate"].as_f64().unwrap().is_finite());
            saw_estimator_row = true;
        }
    }
    assert!(saw_estimator_row);
}

#[test]
fn kernel_logistic_estimate_runs() {
    let dir = tempfile::tempdir().unwrap();
    // Binary labels in the last column.
    let mut rows = String::new();
    let mut state = 0.9f64;
    for i in 0..30 {
        state = (state * 913.0 + i as f64).sin();
        let a = state;
        state = (state * 881.0).sin();
        let b = state;
        let y = if a + 0.5 * b > 0.0 { 1.0 } else { -1.0 };
        rows.push_str(&format!("{a},{b},{y}\n"));
    }
    let data = write_file(dir.path(), "clf.csv", &rows);
    let cfg = write_file(
        dir.path(),
        "run.toml",
        &format!(
            "[data]\nsource = {:?}\n\n[model]\nfamily = \"kernel-logistic\"\nlambda = 1.0\ngamma = 0.5\n\n[estimator]\nmethod = \"randalo\"\nm = 16\n\n[risk]\nfunction = \"misclassification\"\n",
            data.display()
        ),
    );
    let out = bin().args(["estimate", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let row = text.lines().find(|l| l.contains(",randalo,")).unwrap();
    let estimate: f64 = row.split(',').nth(4).unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&estimate));
}
