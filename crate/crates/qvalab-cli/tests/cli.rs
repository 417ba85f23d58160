//! End-to-end runs of the `qvalab` binary: exit codes, JSON shape and config files.

use std::process::{Command, Output};

use serde_json::Value;

fn qvalab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qvalab")).args(args).output().expect("spawn qvalab")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn clean_verify_exits_zero_with_summary() {
    let out = qvalab(&["verify", "--suite", "kappa,rational", "--type", "A1", "--hbar-order", "2", "--x-order", "4"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["summary"]["fail"], 0);
    assert!(v["summary"]["pass"].as_u64().unwrap() > 0);
    assert_eq!(v["reports"].as_array().unwrap().len(), 2);
    assert_eq!(v["config"]["hbar_order"], 2);
}

#[test]
fn corruption_exits_one_with_location() {
    let out = qvalab(&[
        "verify", "--suite", "kappa", "--type", "A2", "--hbar-order", "2", "--x-order", "4", "--corrupt-kappa", "1,2",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let v = json(&out);
    let failed: Vec<&Value> = v["reports"][0]["results"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|r| r["status"] == "fail")
        .collect();
    assert!(!failed.is_empty());
    assert!(failed.iter().all(|r| r["first_mismatch"].is_string()));
}

#[test]
fn bad_configuration_exits_two() {
    assert_eq!(qvalab(&["structure", "--type", "A1", "--hbar-order", "0"]).status.code(), Some(2));
    assert_eq!(qvalab(&["verify", "--suite", "bogus", "--type", "A1"]).status.code(), Some(2));
    let dir = std::env::temp_dir().join(format!("qvalab-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.json");
    std::fs::write(&bad, r#"{"bogus": 1}"#).unwrap();
    let out = qvalab(&["--config", bad.to_str().unwrap(), "verify", "--suite", "b"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn config_file_supplies_options() {
    let dir = std::env::temp_dir().join(format!("qvalab-cfg-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("run.json");
    std::fs::write(&cfg, r#"{"type": "A2", "mu": "flip", "hbar_order": 2}"#).unwrap();
    let out = qvalab(&["--config", cfg.to_str().unwrap(), "verify", "--suite", "b"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["config"]["type"], "A2");
    assert_eq!(v["config"]["mu"], "flip");
    assert_eq!(v["summary"]["fail"], 0);
}

#[test]
fn empty_suite_list_is_header_only() {
    let out = qvalab(&["verify", "--suite", "", "--type", "A1", "--hbar-order", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!(v["reports"].as_array().unwrap().is_empty());
    assert_eq!(v["summary"]["pass"], 0);
}

#[test]
fn output_file_round_trips() {
    let dir = std::env::temp_dir().join(format!("qvalab-out-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("report.json");
    let out = qvalab(&["--out", path.to_str().unwrap(), "verify", "--suite", "b", "--type", "A1", "--hbar-order", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let again: Value = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
    assert_eq!(v, again);
    assert_eq!(v["reports"][0]["suite"], "bconst");
}

#[test]
fn fock_apply_reports_graded_dimensions() {
    let out = qvalab(&["fock", "--type", "A1", "--hbar-order", "1", "--degree", "2", "--apply", "h1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["payload"]["graded_dimensions"]["0"], 3);
    assert_eq!(v["payload"]["dimension"], 12);
}

#[test]
fn text_format_prints_summary_line() {
    let out = qvalab(&["--format", "text", "verify", "--suite", "q0", "--type", "A1", "--hbar-order", "2"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("summary:"));
}
