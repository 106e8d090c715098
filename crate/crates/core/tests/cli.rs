use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_birkhoff-lax"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn classify_kt_passes_and_reports_the_diagram() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["classify", "--system", "kt", "--n", "5"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let report = read_json(&dir.path().join("classify.json"));
    assert_eq!(report["system"], "kt");
    assert_eq!(report["n"], 5);
    assert_eq!(report["diagram"]["weight_multiset"], serde_json::json!([1, 2, 2, 2, 2, 2, 4]));
    assert!(report["tests"].as_array().unwrap().iter().all(|t| t["pass"] == true));
}

#[test]
fn classify_counterexample_exits_with_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["classify", "--spectrum", "[[1,0],[0,1],[-2,-1]]"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let report = read_json(&dir.path().join("classify.json"));
    assert!(!report["violations"].as_array().unwrap().is_empty());
}

#[test]
fn rank_below_four_is_an_input_error_naming_n() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["verify", "--system", "kt", "--n", "3"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`n`"));
}

#[test]
fn malformed_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"system": "kt", "integrator": {"rtol": -1.0}}"#);
    let out = run(&["simulate", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("integrator.rtol"));

    let cfg = write_config(dir.path(), r#"{"system": "kt", "sede": 3}"#);
    let out = run(&["simulate", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sede"));
}

#[test]
fn verify_dn_passes_every_test() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["verify", "--system", "dn_toda", "--n", "4", "--samples", "20"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let report = read_json(&dir.path().join("verify.json"));
    let tests = report["tests"].as_array().unwrap();
    assert!(tests.iter().any(|t| t["name"] == "eigenvalue_pairing"));
    assert!(tests.iter().all(|t| t["pass"] == true));
}

#[test]
fn printed_variant_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["verify", "--system", "kt", "--n", "4", "--samples", "10", "--paper-literal-eqgen"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let report = read_json(&dir.path().join("verify.json"));
    let failed: Vec<&str> = report["tests"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|t| t["pass"] == false)
        .map(|t| t["name"].as_str().unwrap())
        .collect();
    assert!(failed.contains(&"lax_residual"));
    assert!(failed.contains(&"bracket_field"));
}

#[test]
fn simulate_is_deterministic_with_expected_columns() {
    let cfg_body = r#"{"system": "kt", "n": 4, "seed": 9, "integrator": {"t_end": 5.0}}"#;
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_config(dir.path(), cfg_body);
        let out = run(&["simulate", "--config", &cfg], dir.path());
        assert_eq!(out.status.code(), Some(0));
        let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
        let summary = fs::read_to_string(dir.path().join("summary.json")).unwrap();
        outputs.push((csv, summary));
    }
    assert_eq!(outputs[0], outputs[1]);
    let header = outputs[0].0.lines().next().unwrap();
    // t, 2n + 1 state columns, n integrals
    assert_eq!(header.split(',').count(), 1 + 9 + 4);
    let summary: Value = serde_json::from_str(&outputs[0].1).unwrap();
    assert_eq!(summary["status"], "completed");
    assert!(summary["tests"].as_array().unwrap().iter().all(|t| t["pass"] == true));
}

#[test]
fn step_limit_writes_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"system": "dn_toda", "n": 4, "integrator": {"t_end": 50.0, "max_steps": 5}}"#,
    );
    let out = run(&["simulate", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let summary = read_json(&dir.path().join("summary.json"));
    assert_eq!(summary["partial"], true);
    assert!(dir.path().join("trajectory.csv").exists());
}

#[test]
fn leapfrog_rejects_a_flaschka_initial_condition() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"system": "dn_toda", "n": 4,
            "initial_condition": {"frame": "flaschka", "a": [0.5, 0.5, 0.5, 0.5], "b": [0.1, 0.2, 0.3, 0.4]},
            "integrator": {"method": "leapfrog", "initial_step": 0.01, "t_end": 1.0}}"#,
    );
    let out = run(&["simulate", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn leapfrog_accepts_rational_coordinates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"system": "kt", "n": 4,
            "initial_condition": {"frame": "canonical", "q": ["1/3", 0, 0, "-1/3"], "p": [0.1, 0.2, 0.3, 0.4]},
            "integrator": {"method": "leapfrog", "initial_step": 0.01, "t_end": 2.0}}"#,
    );
    let out = run(&["simulate", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let first: Vec<f64> = csv.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!((first[1] - 1.0 / 3.0).abs() < 1e-15);
}
