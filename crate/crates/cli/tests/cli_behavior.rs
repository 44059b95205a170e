//! End-to-end CLI behavior: exit codes, report contents, seeding and
//! determinism contracts.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_robust-merton")
}

fn write_canonical_scenario(dir: &Path, utility: &str) -> PathBuf {
    let path = dir.join(format!("scenario-{}.json", utility.replace(['{', '}', ':', ' '], "")));
    let json = format!(
        r#"{{
  "version": "1",
  "d": 1,
  "r": 0.0,
  "x0": 1.0,
  "utility": {utility},
  "cells": [
    {{"t_start": 0.0, "t_end": 1.0,
      "drift": {{"kind": "box", "lower": [0.05], "upper": [0.10]}},
      "vol": {{"eig_min": 0.04, "eig_max": 0.09}}}}
  ]
}}"#
    );
    fs::write(&path, json).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env_remove("ROBUST_MERTON_SEED")
        .output()
        .expect("binary should run")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("process should exit normally")
}

#[test]
fn solve_reports_canonical_rate_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_canonical_scenario(dir.path(), r#"{"kind": "log"}"#);
    let report_path = dir.path().join("report.json");
    let out = run(&["solve", scenario.to_str().unwrap(), "-o", report_path.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    let rate = report["cells"][0]["rate"].as_f64().unwrap();
    assert!((rate - 0.013888888888888888).abs() < 1e-12, "rate {rate}");
    let value = report["value_at_t0"].as_f64().unwrap();
    assert!((value - 0.013888888888888888).abs() < 1e-12);
    let pi = report["cells"][0]["strategy"][0].as_f64().unwrap();
    assert!((pi - 5.0 / 9.0).abs() < 1e-12);
}

#[test]
fn solve_accepts_extra_value_points() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_canonical_scenario(dir.path(), r#"{"kind": "log"}"#);
    let report_path = dir.path().join("report.json");
    let out = run(&[
        "solve",
        scenario.to_str().unwrap(),
        "-o",
        report_path.to_str().unwrap(),
        "--at",
        "1.0:2.0",
    ]);
    assert_eq!(exit_code(&out), 0);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    let v = report["values"][0]["value"].as_f64().unwrap();
    assert!((v - 2.0_f64.ln()).abs() < 1e-14, "terminal value {v}");

    let out = run(&[
        "solve",
        scenario.to_str().unwrap(),
        "-o",
        report_path.to_str().unwrap(),
        "--at",
        "nonsense",
    ]);
    assert_eq!(exit_code(&out), 1);
}

#[test]
fn invalid_scenario_exits_two_and_names_the_violation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(
        &path,
        r#"{"version":"1","d":1,"r":0.0,"x0":1.0,"utility":{"kind":"log"},
           "cells":[{"t_start":0.0,"t_end":1.0,
             "drift":{"kind":"box","lower":[0.05],"upper":[0.10]},
             "vol":{"eig_min":0.0,"eig_max":0.09}}]}"#,
    )
    .unwrap();
    let out = run(&["solve", path.to_str().unwrap(), "-o", dir.path().join("r.json").to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("positive"), "stderr: {stderr}");
}

#[test]
fn missing_file_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["solve", "does-not-exist.json", "-o", dir.path().join("r.json").to_str().unwrap()]);
    assert_eq!(exit_code(&out), 1);
}

#[test]
fn unknown_scenario_version_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v9.json");
    fs::write(
        &path,
        r#"{"version":"9","d":1,"r":0.0,"x0":1.0,"utility":{"kind":"log"},"cells":[]}"#,
    )
    .unwrap();
    let out = run(&["solve", path.to_str().unwrap(), "-o", dir.path().join("r.json").to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn simulate_is_deterministic_for_a_fixed_seed() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_canonical_scenario(dir.path(), r#"{"kind": "log"}"#);
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for target in [&a, &b] {
        let out = run(&[
            "simulate",
            scenario.to_str().unwrap(),
            "-o",
            target.to_str().unwrap(),
            "--paths",
            "2000",
            "--steps-per-year",
            "8",
            "--seed",
            "7",
        ]);
        assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let csv = fs::read_to_string(&a).unwrap();
    assert!(csv.starts_with("path_id,terminal_wealth,utility_value\n"));
    assert!(csv.lines().last().unwrap().starts_with("summary,"));
    assert!(!csv.contains('\r'), "expected LF line endings");
}

#[test]
fn simulate_summary_mean_agrees_with_solved_value() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_canonical_scenario(dir.path(), r#"{"kind": "log"}"#);
    let report_path = dir.path().join("solve.json");
    let csv_path = dir.path().join("sim.csv");
    let out = run(&["solve", scenario.to_str().unwrap(), "-o", report_path.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0);
    let out = run(&[
        "simulate",
        scenario.to_str().unwrap(),
        "-o",
        csv_path.to_str().unwrap(),
        "--paths",
        "100000",
        "--steps-per-year",
        "8",
        "--seed",
        "20250810",
    ]);
    assert_eq!(exit_code(&out), 0);

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    let analytic = report["value_at_t0"].as_f64().unwrap();
    let csv = fs::read_to_string(&csv_path).unwrap();
    let summary = csv.lines().last().unwrap();
    let fields: Vec<&str> = summary.split(',').collect();
    assert_eq!(fields[0], "summary");
    let mean: f64 = fields[1].parse().unwrap();
    let se: f64 = fields[2].parse().unwrap();
    assert!(
        (mean - analytic).abs() <= 3.0 * se,
        "summary mean {mean} +- {se} vs analytic {analytic}"
    );
}

#[test]
fn simulate_with_zero_paths_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_canonical_scenario(dir.path(), r#"{"kind": "log"}"#);
    let out = run(&[
        "simulate",
        scenario.to_str().unwrap(),
        "-o",
        dir.path().join("s.csv").to_str().unwrap(),
        "--paths",
        "0",
    ]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn seed_env_var_overrides_the_default() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_canonical_scenario(dir.path(), r#"{"kind": "log"}"#);
    let (by_env, by_flag) = (dir.path().join("env.csv"), dir.path().join("flag.csv"));
    let out = Command::new(bin())
        .args([
            "simulate",
            scenario.to_str().unwrap(),
            "-o",
            by_env.to_str().unwrap(),
            "--paths",
            "500",
        ])
        .env("ROBUST_MERTON_SEED", "12345")
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 0);
    let out = run(&[
        "simulate",
        scenario.to_str().unwrap(),
        "-o",
        by_flag.to_str().unwrap(),
        "--paths",
        "500",
        "--seed",
        "12345",
    ]);
    assert_eq!(exit_code(&out), 0);
    assert_eq!(fs::read(&by_env).unwrap(), fs::read(&by_flag).unwrap());
}

#[test]
fn simulate_accepts_a_custom_theta_path_file() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_canonical_scenario(dir.path(), r#"{"kind": "log"}"#);
    let theta = dir.path().join("theta.json");
    fs::write(
        &theta,
        r#"{"segments":[{"t_start":0.0,"t_end":1.0,"mu":[0.08],"sigma":[[0.2]]}]}"#,
    )
    .unwrap();
    let out = run(&[
        "simulate",
        scenario.to_str().unwrap(),
        "-o",
        dir.path().join("s.csv").to_str().unwrap(),
        "--paths",
        "500",
        "--theta",
        theta.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    // A path that does not span the horizon is a validation failure.
    fs::write(
        &theta,
        r#"{"segments":[{"t_start":0.0,"t_end":0.5,"mu":[0.08],"sigma":[[0.2]]}]}"#,
    )
    .unwrap();
    let out = run(&[
        "simulate",
        scenario.to_str().unwrap(),
        "-o",
        dir.path().join("s2.csv").to_str().unwrap(),
        "--paths",
        "500",
        "--theta",
        theta.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn verify_all_suites_pass_on_the_canonical_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_canonical_scenario(dir.path(), r#"{"kind": "power", "gamma": 0.5}"#);
    let report_path = dir.path().join("verify.json");
    let out = run(&[
        "verify",
        scenario.to_str().unwrap(),
        "-o",
        report_path.to_str().unwrap(),
        "--suite",
        "all",
        "--seed",
        "3",
        "--paths",
        "30000",
    ]);
    assert_eq!(exit_code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["pass"], serde_json::Value::Bool(true));
    assert!(report["saddle"][0]["gap"].as_f64().unwrap().abs() <= 1e-8);
}

#[test]
fn injected_rate_corruption_fails_the_hjb_suite_with_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_canonical_scenario(dir.path(), r#"{"kind": "log"}"#);
    let report_path = dir.path().join("verify.json");
    let out = run(&[
        "verify",
        scenario.to_str().unwrap(),
        "-o",
        report_path.to_str().unwrap(),
        "--suite",
        "hjb",
        "--inject-rate-scale",
        "1.01",
    ]);
    assert_eq!(exit_code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    assert!(report["hjb"]["max_abs_relative_residual"].as_f64().unwrap() >= 1e-3);
}

#[test]
fn unknown_suite_name_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_canonical_scenario(dir.path(), r#"{"kind": "log"}"#);
    let out = run(&[
        "verify",
        scenario.to_str().unwrap(),
        "-o",
        dir.path().join("v.json").to_str().unwrap(),
        "--suite",
        "everything",
    ]);
    assert_eq!(exit_code(&out), 1);
}
