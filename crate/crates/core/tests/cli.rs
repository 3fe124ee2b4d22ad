use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pdts_lab::harness::scenarios;
use pdts_lab::simkit::{Completion, Decision, Schedule};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdts-lab")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_trace_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.jsonl");
    let o = cli(&["run", "--scenario", "solo-r2", "--algorithm", "base", "--schedule", "random:3", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines = fs::read_to_string(&out).unwrap();
    assert!(lines.lines().all(|l| serde_json::from_str::<serde_json::Value>(l).is_ok()));
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("t.jsonl.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["scenario"]["name"], "solo-r2");
}

#[test]
fn check_exit_codes_follow_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("solo.jsonl");
    let o = cli(&["run", "--scenario", "solo-r1", "--algorithm", "no-fast", "--schedule", "random:0", "--out", s(&out)]);
    assert!(o.status.success());
    assert_eq!(cli(&["check", "--trace", s(&out), "--property", "serializability"]).status.code(), Some(0));
    let fd = cli(&["check", "--trace", s(&out), "--property", "fast-decision"]);
    assert_eq!(fd.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&fd.stdout).unwrap();
    assert_eq!(v["witness"]["kind"], "depth");
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.jsonl");
    let unknown = cli(&["run", "--scenario", "nope", "--algorithm", "base", "--schedule", "random:1", "--out", s(&out)]);
    assert_eq!(unknown.status.code(), Some(2));
    let bad_seed = cli(&["run", "--scenario", "fids", "--algorithm", "base", "--schedule", "random:x", "--out", s(&out)]);
    assert_eq!(bad_seed.status.code(), Some(2));
    let missing = cli(&["check", "--trace", s(&dir.path().join("absent.jsonl")), "--property", "dap"]);
    assert_eq!(missing.status.code(), Some(2));
    let precondition = {
        cli(&["run", "--scenario", "rfids", "--algorithm", "base", "--schedule", "random:1", "--out", s(&out)]);
        cli(&["check", "--trace", s(&out), "--property", "seamless-ft", "--s", "4"])
    };
    assert_eq!(precondition.status.code(), Some(2));
}

#[test]
fn scenario_and_schedule_files_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("scenario.json");
    fs::write(&scenario, serde_json::to_string(&scenarios::rfids()).unwrap()).unwrap();
    let schedule = dir.path().join("schedule.json");
    let script = Schedule::scripted(vec![Decision::Crash { node: 0 }], Completion::Fair);
    fs::write(&schedule, serde_json::to_string(&script).unwrap()).unwrap();
    let out = dir.path().join("t.jsonl");
    let o = cli(&["run", "--scenario", s(&scenario), "--algorithm", "base", "--schedule", s(&schedule), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(&out).unwrap().contains("\"kind\":\"crash\""));
}

#[test]
fn exhaustive_budget_overrun_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("e.json");
    let o = cli(&["explore", "--scenario", "fids", "--algorithm", "base", "--mode", "exhaustive", "--max", "10", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
}
