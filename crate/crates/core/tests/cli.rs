use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ofdma-sim"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn ofdma-sim")
}

#[test]
fn simulate_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = config("table1.json");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--trials", "3", "--seed", "42", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["trials.csv", "timings.csv", "summary.csv", "config.json"] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let trials = fs::read_to_string(dir.path().join("trials.csv")).unwrap();
    // header + 3 trials x 5 powers x 4 methods
    assert_eq!(trials.lines().count(), 1 + 3 * 5 * 4);
    let echoed = fs::read_to_string(dir.path().join("config.json")).unwrap();
    assert!(echoed.contains("\"base_seed\": 42"));
}

#[test]
fn sweep_writes_wide_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["sweep", "--trials", "2", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let wide = fs::read_to_string(dir.path().join("sum_rate_vs_power.csv")).unwrap();
    assert_eq!(wide.lines().count(), 6);
    assert!(dir.path().join("delta_vs_power.csv").is_file());
}

#[test]
fn reruns_are_bit_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = run(&["simulate", "--trials", "4", "--seed", "7", "--out", d.path().to_str().unwrap()]);
        assert!(o.status.success());
    }
    let read = |d: &tempfile::TempDir| fs::read(d.path().join("trials.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    let read = |d: &tempfile::TempDir| fs::read(d.path().join("summary.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn short_weight_vector_is_rejected_with_its_index() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"weights": [1, 1, 1, 1, 1, 1]}"#).unwrap();
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("weights[6]"), "{err}");
}

#[test]
fn unknown_config_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"trails": 10}"#).unwrap();
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("trails"));
}

#[test]
fn oversized_oracle_instance_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("toy_k4_n12.json");
    let o = run(&["oracle-compare", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("oracle.csv").exists());
}

#[test]
fn oracle_compare_on_a_toy_instance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("toy_k2_n4.json");
    let o = run(&["oracle-compare", "--config", cfg.to_str().unwrap(), "--trials", "5", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = fs::read_to_string(dir.path().join("oracle.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 5 * 5);
    assert!(String::from_utf8_lossy(&o.stdout).contains("instances=25"));
}

#[test]
fn waterfill_debug_prints_the_level() {
    let o = run(&["waterfill-debug", "--gains", "1,0.5", "--budget", "2"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["water_level"].as_f64().unwrap() - 2.5).abs() < 1e-12);
    let p: Vec<f64> = serde_json::from_value(v["powers"].clone()).unwrap();
    assert!((p[0] - 1.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);
}

#[test]
fn bad_arguments_exit_with_usage_code() {
    assert_eq!(run(&["simulate", "--methods", "nonsense"]).status.code(), Some(2));
    assert_eq!(run(&["waterfill-debug", "--gains", "1,-1", "--budget", "1"]).status.code(), Some(2));
}
