//! End-to-end runs of the `fairmeasure` binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairmeasure"))
        .args(args)
        .current_dir(dir)
        .env("FAIRMEASURE_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) {
    std::fs::write(dir.join(name), body).unwrap();
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const CANONICAL: &str = "path,k,exchange,component,value
0,0,0,0,1
0,1,0,0,2
1,0,0,0,1
1,1,0,0,0.5
";

// two assets whose correlation integral is 0.5625 / 2.125 at the base measure
const TWINS: &str = "path,k,exchange,component,value
0,0,0,0,1
0,0,1,0,1
0,1,0,0,2
0,1,1,0,2
1,0,0,0,1
1,0,1,0,1
1,1,0,0,0.5
1,1,1,0,0.5
";

fn file_config(constraints: &str, objective: &str) -> String {
    format!(r#"{{"process": {{"file": "g.csv"}}, "constraints": {constraints}, "objective": "{objective}"}}"#)
}

#[test]
fn simulate_writes_the_full_lattice() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "run.json",
        r#"{"lattice": {"b": 3, "K": 2}, "process": {"gbm": {"drift": [[0.1], [0.0]], "vol": [[0.2], [0.3]], "corr": [[1, 0.5], [0.5, 1]], "s0": [[1], [2]]}}}"#,
    );
    let o = run(dir.path(), &["simulate", "--config", "run.json", "--out", "sim", "--seed", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("sim/process.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("path,k,exchange,component,value"));
    // 9 paths, 3 times, 2 exchanges
    assert_eq!(lines.count(), 9 * 3 * 2);
    assert!(text.contains("00,0,1,0,2\n"));
}

#[test]
fn eval_reports_both_functionals() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "g.csv", CANONICAL);
    write(dir.path(), "run.json", &file_config(r#"{"N": 2}"#, "m"));
    let o = run(dir.path(), &["eval", "--config", "run.json", "--out", "."]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&dir.path().join("eval.json"));
    assert!((report["m"].as_f64().unwrap() - 0.0625).abs() < 1e-15);
    assert!((report["n"].as_f64().unwrap() - 0.25).abs() < 1e-15);
    assert_eq!(report["is_martingale"], Value::Bool(false));
}

#[test]
fn optimize_recovers_the_risk_neutral_measure() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "g.csv", CANONICAL);
    for objective in ["m", "n"] {
        write(dir.path(), "run.json", &file_config(r#"{"N": 2}"#, objective));
        let o = run(dir.path(), &["optimize", "--config", "run.json", "--out", objective]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let report = json(&dir.path().join(objective).join("report.json"));
        assert_eq!(report["feasible"], Value::Bool(true));
        assert!(report["value"].as_f64().unwrap() <= 1e-8);
        let measure = std::fs::read_to_string(dir.path().join(objective).join("measure.csv")).unwrap();
        let weights: Vec<f64> = measure.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
        assert!((weights[0] - 1.0 / 3.0).abs() < 1e-6 && (weights[1] - 2.0 / 3.0).abs() < 1e-6, "{weights:?}");
        let trace = std::fs::read_to_string(dir.path().join(objective).join("trace.csv")).unwrap();
        assert!(trace.lines().count() > 1);
    }
}

#[test]
fn unreachable_floor_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "g.csv", TWINS);
    write(dir.path(), "run.json", &file_config(r#"{"N": 2, "c": 0.9}"#, "m"));
    let o = run(dir.path(), &["optimize", "--config", "run.json", "--out", "."]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(json(&dir.path().join("report.json"))["feasible"], Value::Bool(false));
}

#[test]
fn configuration_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "g.csv", CANONICAL);
    let cases = [
        (r#"{"process": {"file": "g.csv"}, "solver": {"restart": 3}}"#, "solver.restart"),
        (&file_config(r#"{"N": 0.5}"#, "m") as &str, "N"),
        (r#"{"process": {"file": "missing.csv"}}"#, "missing.csv"),
    ];
    for (body, needle) in cases {
        write(dir.path(), "run.json", body);
        let o = run(dir.path(), &["optimize", "--config", "run.json", "--out", "."]);
        let stderr = String::from_utf8_lossy(&o.stderr);
        assert_eq!(o.status.code(), Some(1), "{body}");
        assert!(stderr.starts_with("error: ") && stderr.contains(needle), "{body}: {stderr}");
    }
}

#[test]
fn bad_thread_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "run.json", "{}");
    let o = Command::new(env!("CARGO_BIN_EXE_fairmeasure"))
        .args(["verify", "--config", "run.json", "--out", "."])
        .current_dir(dir.path())
        .env("FAIRMEASURE_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("FAIRMEASURE_THREADS"));
}

#[test]
fn verify_passes_on_defaults_and_flags_bad_processes() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "run.json", r#"{"verify": {"instances": 5}}"#);
    let o = run(dir.path(), &["verify", "--config", "run.json", "--out", "ok"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}");
    assert!(stdout.lines().any(|l| l.starts_with("PASS solver.zero_recovery")));
    assert_eq!(json(&dir.path().join("ok/verify.json"))["failed"], 0);

    // time-0 values differ between the two paths
    write(dir.path(), "g.csv", "path,k,exchange,component,value\n0,0,0,0,1\n0,1,0,0,2\n1,0,0,0,1.5\n1,1,0,0,0.5\n");
    write(dir.path(), "run.json", r#"{"process": {"file": "g.csv"}, "verify": {"instances": 5}}"#);
    let o = run(dir.path(), &["verify", "--config", "run.json", "--out", "bad"]);
    let all = format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr));
    assert_eq!(o.status.code(), Some(1), "{all}");
    assert!(all.contains("adapt"), "{all}");
}
