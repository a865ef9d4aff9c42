use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(name)
}

fn epsafe(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epsafe"))
        .arg("--domain")
        .arg(data("skiworld.domain"))
        .arg("--problem")
        .arg(data("skiworld.problem"))
        .args(args)
        .env("EPSAFE_OUT_DIR", out)
        .output()
        .unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn solves_first_resort() {
    let dir = tempfile::tempdir().unwrap();
    let out = epsafe(dir.path(), &["--planner", "linear", "--model", "kbmc", "--epsilon", "0.1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let plan = json(&dir.path().join("plan.json"));
    assert!((plan["achievedMass"].as_f64().unwrap() - 0.9091).abs() < 1e-9);
    for key in ["steps", "branches", "contexts", "links", "uncoveredContexts"] {
        assert!(plan.get(key).is_some(), "{key}");
    }
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["status"], "solved");
}

#[test]
fn tight_epsilon_reports_best_bound() {
    let dir = tempfile::tempdir().unwrap();
    let out = epsafe(dir.path(), &["--epsilon", "0.05"]);
    assert_eq!(out.status.code(), Some(2));
    let report = json(&dir.path().join("report.json"));
    assert_eq!(report["status"], "unsolvable-within-epsilon");
    assert!((report["bestAchieved"].as_f64().unwrap() - 0.9190).abs() < 1e-4);
    assert!(!dir.path().join("plan.json").exists());
}

#[test]
fn malformed_domain_gives_position() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.domain");
    std::fs::write(&bad, "(operator go\n  (params (?x place)\n  (kind det)").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_epsafe"))
        .arg("--domain")
        .arg(&bad)
        .arg("--problem")
        .arg(data("skiworld.problem"))
        .env("EPSAFE_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    let tail = err.split("bad.domain:").nth(1).expect("diagnostic names the file");
    let mut pos = tail.split(':');
    assert!(pos.next().unwrap().parse::<usize>().is_ok(), "{err}");
    assert!(pos.next().unwrap().parse::<usize>().is_ok(), "{err}");
}

#[test]
fn missing_file_and_bad_epsilon_are_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_epsafe"))
        .args(["--domain", "/nonexistent/x.domain", "--problem", "/nonexistent/x.problem"])
        .env("EPSAFE_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(epsafe(dir.path(), &["--epsilon", "1.0"]).status.code(), Some(1));
    assert_eq!(epsafe(dir.path(), &["--planner", "greedy"]).status.code(), Some(1));
}

#[test]
fn artifacts_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["--planner", "nonlinear", "--epsilon", "0.1", "--seed", "11", "--trials", "5000", "--emit", "plan-json,dot,simulate"];
    for dir in [&a, &b] {
        assert_eq!(epsafe(dir.path(), &args).status.code(), Some(0));
    }
    for name in ["plan.json", "report.json", "simulation.json", "plan.dot", "net.dot"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
    let sim = json(&a.path().join("simulation.json"));
    assert_eq!(sim["exact"].as_f64().unwrap(), sim["analytic"].as_f64().unwrap());
    assert!(sim["zScore"].as_f64().unwrap().abs() < 4.0);
    assert_eq!(sim["violations"].as_array().unwrap().len(), 0);
}

#[test]
fn trace_is_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let out = epsafe(dir.path(), &["--epsilon", "0.1", "--emit", "trace"]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("trace.jsonl")).unwrap();
    let events: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(events.iter().any(|e| e["fields"]["event"] == "node_expanded"));
    assert!(events.iter().any(|e| e["fields"]["event"] == "branch_completed"));
}
