use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn straddle(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_straddle")).args(args).output().unwrap()
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let text = r#"
schema_version = 1
name = "small"
base_seed = 5

[data]
source = "synthetic"

[data.synth]
n_days = 330

[features]
preset = "basic"

[prequential]
split_months = 2
test_start = "2012-07"
train_start = "2011-11-01"
tenor = 7
repetitions = 2
epochs = 3

[[models]]
id = "RF"
kind = "random_forest"
n_estimators = 9

[[models]]
id = "LR"
kind = "logistic_regression"
"#;
    let p = dir.join("small.toml");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn run_writes_reports_and_timeline_reads_them() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("out");
    let o = straddle(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["report.json", "results.jsonl", "metrics_table.csv", "manifest.json", "resolved_config.toml"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let table = fs::read_to_string(out.join("metrics_table.csv")).unwrap();
    assert!(table.starts_with("metric,All,RF,LR,All (2019)"), "{table}");

    let o = straddle(&[
        "timeline", "--run", out.to_str().unwrap(), "--model", "RF", "--from", "2012-07-01", "--to", "2012-12-31",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("week,label,probability,decision,color\n"));
    assert!(text.lines().count() > 10);
}

#[test]
fn dry_run_lists_iterations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = straddle(&["dry-run", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("iteration,train_start"));
    assert!(text.lines().nth(2).unwrap().starts_with("0,2011-11-01,2012-05-01,2012-05-01,2012-07-01"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "schema_version = 1\nname = \"x\"\nbogus = 3\n").unwrap();
    assert_eq!(straddle(&["run", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    let missing = dir.path().join("missing.toml");
    assert_eq!(straddle(&["run", "--config", missing.to_str().unwrap()]).status.code(), Some(2));

    let cfg = small_config(dir.path());
    let o = straddle(&["run", "--config", cfg.to_str().unwrap(), "--models", "SVM"]);
    assert_eq!(o.status.code(), Some(2));

    let probs = dir.path().join("p.csv");
    fs::write(&probs, "week,probability\n1,2.0\n").unwrap();
    assert_eq!(straddle(&["timeline", "--probabilities", probs.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn synth_writes_csv_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = straddle(&["synth", "--out", dir.path().to_str().unwrap(), "--seed", "9"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let files: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
    assert!(files.len() >= 3);
}
