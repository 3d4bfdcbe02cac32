use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gridmin::fixtures::TWO_RING_JSON;
use gridmin::io::{reevaluate, ResultDocument};
use tempfile::TempDir;

fn gridmin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridmin")).args(args).output().expect("binary runs")
}

fn network_file(dir: &TempDir, name: &str, json: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, json).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn evaluate_reports_every_line() {
    let dir = TempDir::new().unwrap();
    let net = network_file(&dir, "ring.json", TWO_RING_JSON);
    let result = dir.path().join("result.json");
    let out = gridmin(&["evaluate", "--network", s(&net), "--r", "1", "--start", "23,19,24", "--result-out", s(&result)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = ResultDocument::from_json(&fs::read_to_string(&result).unwrap()).unwrap();
    assert_eq!(doc.f_k.len(), 13);
    assert_eq!(doc.f, doc.f_k.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    assert_eq!(doc.p_s, vec![23.0, 19.0, 24.0]);
    assert_eq!(doc.dispatch.len(), 4);
    assert!((doc.dispatch.iter().sum::<f64>() - 80.0).abs() < 1e-12);
}

#[test]
fn result_round_trip_reproduces_f() {
    let dir = TempDir::new().unwrap();
    let net = network_file(&dir, "ring.json", TWO_RING_JSON);
    let result = dir.path().join("result.json");
    let out = gridmin(&["descend", "--network", s(&net), "--r", "3", "--start", "19,19,19", "--result-out", s(&result)]);
    assert!(out.status.success());
    let doc = ResultDocument::from_json(&fs::read_to_string(&result).unwrap()).unwrap();
    let eval = reevaluate(&doc, &net).unwrap();
    assert!((eval.f - doc.f).abs() <= 1e-12);
    assert!(doc.termination.is_some());
}

#[test]
fn two_step_trace_has_three_phases() {
    let dir = TempDir::new().unwrap();
    let net = network_file(&dir, "ring.json", TWO_RING_JSON);
    let trace = dir.path().join("trace.csv");
    let result = dir.path().join("result.json");
    let out = gridmin(&[
        "two-step", "--network", s(&net), "--r", "3", "--start", "23,19,24", "--init-iters", "60",
        "--trace-out", s(&trace), "--result-out", s(&result),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut reader = csv::Reader::from_path(&trace).unwrap();
    let headers = reader.headers().unwrap().clone();
    assert_eq!(headers.iter().collect::<Vec<_>>(), ["iter", "phase", "p1", "p2", "p3", "f", "fprime", "t", "case"]);
    let phases: Vec<String> = reader.records().map(|r| r.unwrap()[1].to_string()).collect();
    assert_eq!(phases.iter().filter(|p| *p == "init1").count(), 61);
    assert_eq!(phases.iter().filter(|p| *p == "init2").count(), 61);
    assert!(phases.last().unwrap() == "descent");
}

#[test]
fn seeded_random_start_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let net = network_file(&dir, "ring.json", TWO_RING_JSON);
    let traces: Vec<Vec<u8>> = (0..2)
        .map(|i| {
            let trace = dir.path().join(format!("trace{i}.csv"));
            let result = dir.path().join(format!("result{i}.json"));
            let out = gridmin(&[
                "two-step", "--network", s(&net), "--r", "2", "--start", "random", "--seed", "17", "--init-iters", "40",
                "--trace-out", s(&trace), "--result-out", s(&result),
            ]);
            assert!(out.status.success());
            fs::read(&trace).unwrap()
        })
        .collect();
    assert_eq!(traces[0], traces[1]);
}

#[test]
fn missing_network_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let result = dir.path().join("result.json");
    let trace = dir.path().join("trace.csv");
    let missing = dir.path().join("absent.json");
    let out = gridmin(&["two-step", "--network", s(&missing), "--r", "1", "--result-out", s(&result), "--trace-out", s(&trace)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!result.exists() && !trace.exists());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn bad_arguments_are_input_errors() {
    let dir = TempDir::new().unwrap();
    let net = network_file(&dir, "ring.json", TWO_RING_JSON);
    assert_eq!(gridmin(&["evaluate", "--network", s(&net), "--r", "1", "--start", "1,2"]).status.code(), Some(2));
    assert_eq!(gridmin(&["evaluate", "--network", s(&net), "--r", "-1"]).status.code(), Some(2));
    assert_eq!(gridmin(&["evaluate", "--network", s(&net), "--r", "1", "--start", "40,40,40"]).status.code(), Some(2));
    assert_eq!(gridmin(&["minimize", "--network", s(&net), "--r", "1"]).status.code(), Some(2));
}

#[test]
fn saturated_lines_have_their_own_exit_code() {
    let dir = TempDir::new().unwrap();
    let weak = TWO_RING_JSON.replace("\"weight\": 30.0", "\"weight\": 3.0");
    let net = network_file(&dir, "weak.json", &weak);
    let out = gridmin(&["evaluate", "--network", s(&net), "--r", "1", "--start", "23,19,24"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("saturated"));
}

#[test]
fn iteration_cap_leaves_no_artifacts() {
    let dir = TempDir::new().unwrap();
    let net = network_file(&dir, "ring.json", TWO_RING_JSON);
    let result = dir.path().join("result.json");
    let out = gridmin(&["descend", "--network", s(&net), "--r", "3", "--start", "23,19,24", "--max-iters", "1", "--result-out", s(&result)]);
    assert_eq!(out.status.code(), Some(5));
    assert!(!result.exists());
}

#[test]
fn project_and_gradient_methods() {
    let dir = TempDir::new().unwrap();
    let net = network_file(&dir, "ring.json", TWO_RING_JSON);
    let out = gridmin(&["project", "--network", s(&net), "--r", "1", "--start", "40,-3,10"]);
    assert!(out.status.success());
    let doc = ResultDocument::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(doc.start, vec![40.0, -3.0, 10.0]);
    assert!((doc.p_s[0] - 25.0).abs() < 1e-9 && doc.p_s[1] >= 0.0);

    let out = gridmin(&["gradient", "--network", s(&net), "--r", "1", "--start", "23,19,24"]);
    assert!(out.status.success());
    let doc = ResultDocument::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    let grad = doc.gradient.unwrap();
    assert_eq!(grad.grad_sigma.len(), 13);
    assert_eq!(grad.subgradient.len(), 3);
    assert_eq!(grad.source_line, doc.max_lines[0]);
}
