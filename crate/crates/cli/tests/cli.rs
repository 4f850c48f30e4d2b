use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ridepool"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn simulate(out: &Path) {
    let status = bin()
        .args(["simulate", "--config"])
        .arg(config("small.toml"))
        .args(["--trips", "synthetic:count=80,horizon=1800,seed=3", "--out"])
        .arg(out)
        .status()
        .unwrap();
    assert!(status.success());
}

const OUTPUTS: [&str; 9] = [
    "trips.csv",
    "cells.csv",
    "summary.csv",
    "decisions.csv",
    "customers.csv",
    "splits.csv",
    "runs.csv",
    "pool_events.csv",
    "run_accounts.csv",
];

#[test]
fn simulate_is_byte_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    simulate(a.path());
    simulate(b.path());
    for f in OUTPUTS {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(!x.is_empty(), "{f} empty");
        assert_eq!(x, y, "{f} differs");
    }
    let decisions = std::fs::read_to_string(a.path().join("decisions.csv")).unwrap();
    assert!(decisions.starts_with(
        "cell,time_s,customer,mechanism,decision,vehicle,partner,fare_usd,baseline_cost_usd,guaranteed_cost_usd,added_distance_mi\n"
    ));
}

#[test]
fn trip_file_round_trip() {
    let a = tempfile::tempdir().unwrap();
    simulate(a.path());
    let b = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["simulate", "--config"])
        .arg(config("small.toml"))
        .arg("--trips")
        .arg(a.path().join("trips.csv"))
        .arg("--out")
        .arg(b.path())
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(
        std::fs::read(a.path().join("summary.csv")).unwrap(),
        std::fs::read(b.path().join("summary.csv")).unwrap()
    );
}

#[test]
fn analyze_reports_brackets_and_pareto() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path());
    let out = bin().args(["analyze", "--in"]).arg(dir.path()).args(["--brackets", "--pareto"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("label,mar,saving_ge_0pct"));
    assert!(text.contains("a,b,relation"));
    // CCP never leaves a poolable customer worse off
    let ccp_full = text.lines().find(|l| l.starts_with("CCP") && l.contains(",1.0000,")).unwrap();
    assert!(ccp_full.contains(",100.0000,"), "{ccp_full}");
}

#[test]
fn split_matches_simulated_fares() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path());
    let out_file = dir.path().join("resplit.csv");
    let status = bin()
        .args(["split", "--runs"])
        .arg(dir.path().join("run_accounts.csv"))
        .args(["--scheme", "goalprog", "--thresholds", "5,10,15,20", "--out"])
        .arg(&out_file)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(
        std::fs::read_to_string(&out_file).unwrap(),
        std::fs::read_to_string(dir.path().join("splits.csv")).unwrap()
    );
    let shapley = bin()
        .args(["split", "--runs"])
        .arg(dir.path().join("run_accounts.csv"))
        .args(["--scheme", "shapley"])
        .output()
        .unwrap();
    assert!(shapley.status.success());
    assert!(String::from_utf8(shapley.stdout).unwrap().starts_with("cell,run_id,customer,"));
}

#[test]
fn verify_all_fixtures_pass() {
    let out = bin().args(["verify", "--fixtures", "all"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("fixture,check,pass,detail\n"));
    assert!(!text.contains(",false,"));
}

#[test]
fn bad_inputs_fail_cleanly() {
    let out = bin().args(["verify", "--fixtures", "some"]).output().unwrap();
    assert!(!out.status.success());
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["simulate", "--config"])
        .arg(config("small.toml"))
        .args(["--trips", "synthetic:bogus=1", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("bogus"));
}
