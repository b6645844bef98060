//! End-to-end checks of the command-line binary: artifact layout, exit
//! codes, reproducibility of reruns, and the band/step overrides.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_acouwave"))
}

fn write_config(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

const SOLVE_1D: &str = r#"
[domain]
lengths = [1.0]
[grid]
modes = [6]
[time]
horizon = 0.5
steps = 32
[coefficients]
kind = "direct"
mu = 0.1
eta_v = 0.12
eps = [0.1, 0.1, 0.1, 0.1]
[[initial]]
component = 0
mode = [1]
amplitude = 0.1
[[forcing]]
component = 0
mode = [2]
amplitude = 0.2
envelope = { kind = "exp_cos", rate = -0.5, omega = 2.0 }
"#;

#[test]
fn solve_writes_artifacts_and_reruns_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", SOLVE_1D);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let res = run(&[
            "solve",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(res.status.success(), "stderr: {}", String::from_utf8_lossy(&res.stderr));
        let stdout = String::from_utf8_lossy(&res.stdout);
        assert!(stdout.contains("[PASS]"), "stdout: {stdout}");
    }

    let summary_a = std::fs::read(out_a.join("summary.json")).unwrap();
    let summary_b = std::fs::read(out_b.join("summary.json")).unwrap();
    assert_eq!(summary_a, summary_b, "summary.json differs between reruns");
    let series_a = std::fs::read(out_a.join("timeseries.csv")).unwrap();
    let series_b = std::fs::read(out_b.join("timeseries.csv")).unwrap();
    assert_eq!(series_a, series_b, "timeseries.csv differs between reruns");

    // The summary carries the full resolved configuration and the verdicts.
    let summary: serde_json::Value = serde_json::from_slice(&summary_a).unwrap();
    assert_eq!(summary["scenario"], "solve");
    assert_eq!(summary["config"]["grid"]["modes"][0], 6);
    assert!(summary["verdicts"].as_array().is_some_and(|v| !v.is_empty()));
    assert!(summary["warnings"].is_array());
    assert!(summary["report"]["constants"]["c_g"].as_f64().unwrap() > 0.0);

    // The time series has one row per time node plus the header.
    let text = String::from_utf8(series_a).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "time,norm_h1,norm_l2,pressure_l2,velocity_l2"
    );
    assert_eq!(lines.count(), 33);
}

#[test]
fn overrides_reshape_the_band_and_the_time_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", SOLVE_1D);
    let out = dir.path().join("out");
    let res = run(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--modes",
        "4",
        "--steps",
        "16",
        "--seed",
        "7",
    ]);
    assert!(res.status.success(), "stderr: {}", String::from_utf8_lossy(&res.stderr));
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 7);
    assert_eq!(summary["config"]["grid"]["modes"][0], 4);
    assert_eq!(summary["config"]["time"]["steps"], 16);
    assert_eq!(summary["grid"]["state_dof"], 8);
}

#[test]
fn semigroup_emits_the_sweep_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "run.toml",
        r#"
[domain]
lengths = [1.0]
[grid]
modes = [4]
[time]
horizon = 1.0
steps = 8
[coefficients]
kind = "direct"
mu = 0.15
eta_v = 0.1
eps = [0.0, 0.0, 0.0, 0.0]
"#,
    );
    let out = dir.path().join("out");
    let res = run(&[
        "semigroup",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "stderr: {}", String::from_utf8_lossy(&res.stderr));
    // 0 and the dyadic frequencies up to 4096, plus the header row.
    let resolvent = std::fs::read_to_string(out.join("resolvent.csv")).unwrap();
    assert_eq!(resolvent.lines().count(), 15);
    assert!(resolvent.starts_with("lambda,resolvent_norm,lambda_times_norm,unbounded"));
    assert!(out.join("resolvent_doubled.csv").is_file());
    assert!(out.join("propagator.csv").is_file());
}

#[test]
fn failing_budget_verdict_sets_exit_code_one() {
    let dir = tempfile::tempdir().unwrap();
    // The constant part of gamma exceeds min(mu, eta_v) lambda_min: the run
    // completes but the budget verdict fails.
    let cfg = write_config(
        dir.path(),
        "run.toml",
        r#"
[domain]
lengths = [1.0]
[grid]
modes = [6]
[time]
horizon = 0.5
steps = 32
[coefficients]
kind = "direct"
mu = 0.05
eta_v = 0.08
eps = [0.05, 0.05, 0.05, 0.05]
gamma_const = 0.6
[[initial]]
component = 0
mode = [1]
amplitude = 0.05
"#,
    );
    let out = dir.path().join("out");
    let res = run(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("[FAIL]"), "stdout: {stdout}");
    assert!(out.join("summary.json").is_file());
}

#[test]
fn malformed_config_reports_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", "[domain\nlengths = oops");
    let res = run(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("error"));
}

#[test]
fn decay_rejects_forced_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.toml", SOLVE_1D);
    let out = dir.path().join("out");
    let res = run(&[
        "decay",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("unforced"));
}
