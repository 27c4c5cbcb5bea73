mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{bin, default_config_path};

fn ktsim(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("spawn ktsim")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout_json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn small_config(dir: &Path) -> String {
    let mut cfg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(default_config_path()).unwrap()).unwrap();
    cfg["experiment"]["samples"] = 1000.into();
    let path = dir.join("small.json");
    std::fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn missing_config_is_an_io_error() {
    let o = ktsim(&[
        "run",
        "--config",
        "/nonexistent/cfg.json",
        "--seed",
        "1",
        "--out",
        "/tmp/x",
    ]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/cfg.json"));
}

#[test]
fn invalid_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"schema": 1, "experiment": {"noise_rate": 0.7}}"#).unwrap();
    let out = dir.path().join("out");
    let o = ktsim(&[
        "run",
        "--config",
        path.to_str().unwrap(),
        "--seed",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("experiment"));
}

#[test]
fn run_is_reproducible_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let mut files = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = ktsim(&[
            "--quiet",
            "run",
            "--config",
            &cfg,
            "--seed",
            "42",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(o.stdout.is_empty());
        let path = out.join("default").join("ch4").join("seed-42.json");
        files.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(files[0], files[1]);
    let v: serde_json::Value = serde_json::from_slice(&files[0]).unwrap();
    assert_eq!(v["seed"], 42);
    assert_eq!(v["combo_mask"], 7);
}

#[test]
fn run_without_seed_reports_the_chosen_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("out");
    let o = ktsim(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let err = String::from_utf8_lossy(&o.stderr);
    let seed = err.trim().strip_prefix("seed: ").expect("seed on stderr");
    assert!(out
        .join("default")
        .join("ch4")
        .join(format!("seed-{seed}.json"))
        .exists());
    assert!(String::from_utf8_lossy(&o.stdout).contains("openness"));
}

#[test]
fn sweep_writes_rows_summary_and_refuses_reuse() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("sweep");
    let out_s = out.to_str().unwrap();
    let o = ktsim(&[
        "--quiet",
        "sweep",
        "--config",
        &cfg,
        "--replicates",
        "50",
        "--out",
        out_s,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "scenario,combo_mask,replicate,seed,union_size,true_count,false_count,openness,normalized"
    );
    assert_eq!(lines.count(), 400);

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let combos = summary["combos"].as_array().unwrap();
    assert_eq!(combos.len(), 8);
    for c in combos {
        assert_eq!(c["runs"], 50);
        assert!(c["mean_openness"].is_f64());
    }
    assert_eq!(summary["datasets_paired"], true);
    assert!(out.join("default").join("none").join("0.json").exists());
    assert!(out.join("default").join("ch4").join("49.json").exists());

    let again = ktsim(&[
        "--quiet",
        "sweep",
        "--config",
        &cfg,
        "--replicates",
        "1",
        "--out",
        out_s,
    ]);
    assert_eq!(code(&again), 3);
    let forced = ktsim(&[
        "--quiet",
        "sweep",
        "--config",
        &cfg,
        "--replicates",
        "1",
        "--out",
        out_s,
        "--force",
    ]);
    assert_eq!(code(&forced), 0);
}

#[test]
fn validate_exit_codes() {
    let o = ktsim(&["validate", "--trials", "200", "--seed", "3"]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert_eq!(v["violations"], 0);
    assert_eq!(v["trials"], 200);

    let o = ktsim(&[
        "validate",
        "--trials",
        "200",
        "--seed",
        "3",
        "--break-passthrough",
    ]);
    assert_eq!(code(&o), 2);
    let v = stdout_json(&o);
    assert!(v["violations"].as_u64().unwrap() > 0);
    assert!(!v["transcripts"].as_array().unwrap().is_empty());

    assert_eq!(code(&ktsim(&["validate", "--trials", "0"])), 1);
}

#[test]
fn oracle_reports_both_values() {
    let o = ktsim(&[
        "oracle", "--p-stay", "0.9", "--dist", "2", "--delta", "0.1", "--seed", "1",
    ]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    let analytic = v["analytic"].as_f64().unwrap();
    assert!((analytic - 0.64 * 0.64).abs() < 1e-12);
    assert!(v["abs_diff"].as_f64().unwrap() < 0.015);

    assert_eq!(
        code(&ktsim(&[
            "oracle", "--p-stay", "0.9", "--dist", "1", "--delta", "0.5"
        ])),
        1
    );
    assert_eq!(code(&ktsim(&["oracle", "--p-stay", "0.9"])), 1);
}

#[test]
fn jobs_flag_does_not_change_results() {
    let one = ktsim(&["--jobs", "1", "validate", "--trials", "100", "--seed", "9"]);
    let many = ktsim(&["--jobs", "4", "validate", "--trials", "100", "--seed", "9"]);
    assert_eq!(one.stdout, many.stdout);
}
