//! End-to-end checks of the `mpcbench` binary: config handling, output
//! files, reproducibility and the comparison suite.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_mpcbench")
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mpcbench-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_hover_config(dir: &Path) -> PathBuf {
    let path = dir.join("scenario.json");
    std::fs::write(
        &path,
        r#"{
            "schema_version": 1,
            "name": "cli-hover",
            "controller": "lmpc",
            "trajectory": {"kind": "hover", "position": [0.0, 0.0, 1.0], "yaw": 0.0},
            "duration": 1.5
        }"#,
    )
    .unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("failed to spawn mpcbench")
}

#[test]
fn run_writes_log_timing_and_metrics() {
    let dir = tmp_dir("run");
    let config = write_hover_config(&dir);
    let out_dir = dir.join("out");
    let out = run(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for file in ["log.csv", "timing.csv", "metrics.json", "scenario.json"] {
        assert!(out_dir.join(file).exists(), "missing {file}");
    }
    let stdout = String::from_utf8(out.stdout).unwrap();
    let report: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(report["controller"], "lmpc");
    assert!(report["tracking"]["rmse_total_cm"].as_f64().unwrap() < 1.0);
    // The trajectory log carries no wall-clock columns.
    let log = std::fs::read_to_string(out_dir.join("log.csv")).unwrap();
    assert!(!log.contains("solve_time"));
}

#[test]
fn identical_runs_produce_identical_logs() {
    let dir = tmp_dir("repro");
    let config = write_hover_config(&dir);
    let mut logs = Vec::new();
    for sub in ["a", "b"] {
        let out_dir = dir.join(sub);
        let out = run(&[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--out-dir",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success());
        logs.push(std::fs::read(out_dir.join("log.csv")).unwrap());
    }
    assert_eq!(logs[0], logs[1]);
}

#[test]
fn suite_runs_both_controllers_and_reports() {
    let dir = tmp_dir("suite");
    let config = write_hover_config(&dir);
    let out_dir = dir.join("out");
    let out = run(&[
        "suite",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
            .unwrap();
    let reports = report.as_array().unwrap();
    assert_eq!(reports.len(), 2);
    assert_eq!(reports[0]["controller"], "lmpc");
    assert_eq!(reports[1]["controller"], "nmpc");
    assert!(out_dir.join("cli-hover/lmpc/log.csv").exists());
    assert!(out_dir.join("cli-hover/nmpc/log.csv").exists());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("rmse_total_cm"));
    assert!(stdout.contains("mean_ms"));
}

#[test]
fn metrics_recomputes_from_log_file() {
    let dir = tmp_dir("metrics");
    let config = write_hover_config(&dir);
    let out_dir = dir.join("out");
    assert!(run(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ])
    .status
    .success());
    let out = run(&[
        "metrics",
        "--log",
        out_dir.join("log.csv").to_str().unwrap(),
        "--skip-transient",
        "0.5",
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["tracking"]["rmse_total_cm"].as_f64().unwrap() < 1.0);
}

#[test]
fn invalid_config_fails_with_json_error() {
    let dir = tmp_dir("invalid");
    let config = dir.join("bad.json");
    std::fs::write(&config, r#"{"schema_version": 99}"#).unwrap();
    let out = run(&["run", "--config", config.to_str().unwrap()]);
    assert!(!out.status.success());
    let err: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert!(err["error"].is_string());
}

#[test]
fn init_writes_a_valid_config() {
    let dir = tmp_dir("init");
    let path = dir.join("scenario.json");
    let out = run(&["init", "--out", path.to_str().unwrap(), "--controller", "nmpc"]);
    assert!(out.status.success());
    let cfg = std::fs::read_to_string(&path).unwrap();
    let v: serde_json::Value = serde_json::from_str(&cfg).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["controller"], "nmpc");
}
