use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn nht(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_nht"));
    c.args(args);
    for (k, v) in envs {
        c.env(k, v);
    }
    c.output().expect("run nht")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_owned()
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("json report on stdout")
}

#[test]
fn stopping_with_zero_operator_keeps_only_the_top_cube() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "zero.json",
        r#"{"schema": 1, "scenario": {"kernel": {"kind": "zero"}, "trials": 3}, "battery": {"enabled": false}}"#,
    );
    let out = nht(&["stopping", "--config", &cfg], &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    let trees = r["suites"][0]["report"]["scenario"]["trees"].as_array().unwrap();
    assert_eq!(trees.len(), 6);
    assert!(trees.iter().all(|t| t["stops"] == 1));
    assert_eq!(r["config"]["scenario"]["kernel"]["kind"], "zero");
}

#[test]
fn verify_kernel_on_cauchy_passes_with_ratios() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "k.json", r#"{"schema": 1, "kernel": {"samples": 256, "oracles": false}}"#);
    let out = nht(&["verify-kernel", "--config", &cfg], &[]);
    assert_eq!(out.status.code(), Some(0));
    let k = &report(&out)["suites"][0]["report"]["kernel"]["report"];
    assert!(k["size_ratio"].as_f64().unwrap() > 0.0);
    assert!(k["holder_x_ratio"].as_f64().is_some());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("PASS verify-kernel"));
}

#[test]
fn pairing_on_the_default_scenario_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let first = nht(&["pairing", "--seed", "7", "--out", a.to_str().unwrap()], &[]);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    let second = nht(&["pairing", "--seed", "7", "--out", b.to_str().unwrap()], &[]);
    assert_eq!(second.status.code(), Some(0));
    let x = std::fs::read(a.join("pairing.json")).unwrap();
    let y = std::fs::read(b.join("pairing.json")).unwrap();
    assert!(!x.is_empty());
    assert_eq!(x, y);
}

#[test]
fn thread_count_does_not_change_the_output() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "p.json", r#"{"schema": 1, "scenario": {"trials": 4}, "schur": {"enabled": false}}"#);
    let one = nht(&["pairing", "--config", &cfg], &[("NHT_THREADS", "1")]);
    let many = nht(&["pairing", "--config", &cfg], &[("NHT_THREADS", "4")]);
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(one.stdout, many.stdout);
    let bad = nht(&["growth"], &[("NHT_THREADS", "zero")]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let unknown = write_config(dir.path(), "u.json", r#"{"schema": 1, "scenario": {"seeds": 3}}"#);
    let out = nht(&["growth", "--config", &unknown], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown field"));
    let version = write_config(dir.path(), "v.json", r#"{"schema": 9}"#);
    assert_eq!(nht(&["growth", "--config", &version], &[]).status.code(), Some(2));
    let missing = dir.path().join("missing.json");
    assert_eq!(nht(&["growth", "--config", missing.to_str().unwrap()], &[]).status.code(), Some(2));
    assert_eq!(nht(&["growth", "--suite", "pairing"], &[]).status.code(), Some(2));
}

#[test]
fn all_restricted_by_suite_flags() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "g.json", r#"{"schema": 1, "kernel": {"samples": 64, "oracles": false}}"#);
    let out = nht(&["all", "--config", &cfg, "--suite", "growth", "--suite", "verify-kernel"], &[]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["command"], "all");
    let names: Vec<&str> = r["suites"].as_array().unwrap().iter().map(|s| s["suite"].as_str().unwrap()).collect();
    assert_eq!(names, ["verify-kernel", "growth"]);
}

#[test]
fn saturated_bad_decay_ladder_fails_and_writes_tables() {
    let dir = TempDir::new().unwrap();
    // at r = 3 every estimate is 1, so there is no decay to fit
    let cfg = write_config(
        dir.path(),
        "mc.json",
        r#"{"schema": 1, "mc": {"trials": 32, "cases": [{"dim": 1, "gamma": 0.25, "r": 3}], "collar_trials": 8}}"#,
    );
    let out_dir = dir.path().join("out");
    let out = nht(&["mc-goodbad", "--config", &cfg, "--out", out_dir.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(1));
    let csv = std::fs::read_to_string(out_dir.join("bad_decay.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("dim,gamma,r,k,estimate,half_width"));
    assert_eq!(lines.count(), 7);
    assert!(csv.contains(",1.0000000000000000e0,"));
    let collar = std::fs::read_to_string(out_dir.join("collar.csv")).unwrap();
    assert!(collar.lines().nth(1).unwrap().starts_with("0.0000000000000000e0,0.0000000000000000e0,"));
    let json: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("mc-goodbad.json")).unwrap()).unwrap();
    assert_eq!(json["pass"], false);
}
