use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn curveflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_curveflow"))
        .args(args)
        .env_remove("CURVEFLOW_OUT")
        .output()
        .expect("spawn curveflow")
}

fn small_run_args(out: &Path) -> Vec<String> {
    [
        "run",
        "--set",
        "nodes=33",
        "--set",
        "t_end=0.1",
        "--set",
        "snapshot_every=0.05",
        "--set",
        "ceiling=10",
        "--set",
        "monitors=monotone",
        "--out",
    ]
    .iter()
    .map(|s| s.to_string())
    .chain([out.display().to_string()])
    .collect()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn help_exits_zero() {
    let out = curveflow(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("run"));
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = curveflow(&["run", "--set", "no_such_key=1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));
}

#[test]
fn bad_subcommand_is_a_config_error() {
    assert_eq!(curveflow(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn missing_config_file_is_a_config_error() {
    let out = curveflow(&["run", "--config", "/nonexistent/curveflow.conf"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gauss_ball_is_rejected_with_explanation() {
    let dir = tempfile::tempdir().unwrap();
    let out = curveflow(&["run", "--set", "speed=Gauss", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cone"));
}

#[test]
fn properties_pass() {
    let out = curveflow(&["properties", "--speed", "Hk^1/k:k=2", "--samples", "500", "--dimension", "3", "--out"]);
    // --out needs a value; clap rejects the line
    assert_eq!(out.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let out = curveflow(&[
        "properties",
        "--speed",
        "Hk^1/k:k=2",
        "--samples",
        "500",
        "--dimension",
        "3",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS"));
}

#[test]
fn run_writes_manifest_with_hashes_and_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        let args = small_run_args(dir);
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = curveflow(&args);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (ma, mb) = (manifest(a.path()), manifest(b.path()));
    let files = ma["files"].as_array().unwrap();
    assert!(files.iter().any(|f| f["path"] == "run.json"));
    assert!(files.iter().any(|f| f["path"].as_str().unwrap().starts_with("snapshots/")));
    for f in files {
        let bytes = std::fs::read(a.path().join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(f["sha256"].as_str().unwrap(), curveflow::io::sha256_hex(&bytes));
        assert_eq!(f["bytes"].as_u64().unwrap(), bytes.len() as u64);
    }
    assert_eq!(ma["files"], mb["files"]);
}

#[test]
fn monitors_and_report_read_back_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    let args = small_run_args(&run_dir);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    assert_eq!(curveflow(&args).status.code(), Some(0));

    let mon_dir = dir.path().join("mon");
    let out = curveflow(&[
        "monitors",
        "--snapshots",
        run_dir.join("snapshots").to_str().unwrap(),
        "--set",
        "monitors=monotone",
        "--set",
        "ceiling=10",
        "--out",
        mon_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let json = dir.path().join("report.json");
    let out = curveflow(&["report", run_dir.to_str().unwrap(), mon_dir.to_str().unwrap(), "--json", json.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let rows: Value = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    assert!(rows.as_array().unwrap().len() >= 2);
}

#[test]
fn env_var_sets_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let out = Command::new(env!("CARGO_BIN_EXE_curveflow"))
        .args(["properties", "--samples", "100"])
        .env("CURVEFLOW_OUT", &target)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(target.join("manifest.json").exists());
}
