use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_markov-hamilton");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const THREE_CYCLE: &str = r#"{"n": 3, "q": [[-3, 1, 2], [2, -3, 1], [1, 2, -3]]}"#;

#[test]
fn analyze_three_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "3cycle.json", THREE_CYCLE);
    let out = run(&["analyze", &input]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["status"], "ok");
    for p in r["stationary"]["pi"].as_array().unwrap() {
        assert!((p.as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }
    let lambdas = r["spectrum"]["lambdas"].as_array().unwrap();
    assert_eq!(lambdas.len(), 1);
    assert!((lambdas[0].as_f64().unwrap() - 3f64.sqrt()).abs() < 1e-10);
    assert_eq!(r["spectrum"]["zero_multiplicity"], 1);
    assert!((r["entropy"]["ep"].as_f64().unwrap() - 2f64.ln()).abs() < 1e-12);
    assert!((r["entropy"]["trace_gram"].as_f64().unwrap() - 6.0).abs() < 1e-10);
    assert!(r["spectrum"].get("matrices").is_none());
    assert!(r["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true));
}

#[test]
fn analyze_is_byte_deterministic_and_verbose_adds_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "3cycle.json", THREE_CYCLE);
    let a = run(&["analyze", &input]);
    let b = run(&["analyze", &input]);
    assert_eq!(a.stdout, b.stdout);
    let v = run(&["analyze", &input, "--verbose"]);
    let r: Value = serde_json::from_slice(&v.stdout).unwrap();
    assert_eq!(r["spectrum"]["matrices"]["sigma"].as_array().unwrap().len(), 3);
    assert_eq!(r["entropy"]["per_edge"].as_array().unwrap().len(), 3);
}

#[test]
fn analyze_reversible_is_equilibrium() {
    let dir = tempfile::tempdir().unwrap();
    let gen = run(&["gen", "--n", "6", "--kind", "reversible", "--seed", "4"]);
    assert_eq!(gen.status.code(), Some(0));
    let input = write(dir.path(), "reversible.json", std::str::from_utf8(&gen.stdout).unwrap());
    let out = run(&["analyze", &input]);
    assert_eq!(out.status.code(), Some(0));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["diagnostics"]["equilibrium"], true);
    assert!(r["entropy"]["ep"].as_f64().unwrap() <= 1e-18);
    assert!(r["spectrum"]["lambdas"].as_array().unwrap().iter().all(|l| l.as_f64().unwrap() < 1e-9));
}

#[test]
fn analyze_reducible_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "reducible.json", r#"{"n": 2, "q": [[-1, 0], [1, 0]]}"#);
    let out = run(&["analyze", &input]);
    assert_eq!(out.status.code(), Some(1));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["status"], "error");
    assert_eq!(r["error"]["kind"], "Reducible");
    assert!(String::from_utf8_lossy(&out.stderr).contains("reducible") || !out.stderr.is_empty());
}

#[test]
fn analyze_reports_parse_errors_with_lines() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "bad.csv", "-1,1\n1,oops\n");
    let out = run(&["analyze", &input]);
    assert_eq!(out.status.code(), Some(1));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["error"]["module"], "format");
    assert!(r["error"]["message"].as_str().unwrap().contains("line 2"));

    let missing = dir.path().join("absent.json");
    let out = run(&["analyze", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn row_convention_transposes() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "rows.csv", "-3,1,2\n1,-2,1\n1,1,-2\n");
    let out = run(&["analyze", &input, "--convention", "row"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let col = run(&["analyze", &input]);
    assert_eq!(col.status.code(), Some(1));
}

#[test]
fn analyze_writes_to_out() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "3cycle.json", THREE_CYCLE);
    let path = dir.path().join("report.json");
    let out = run(&["analyze", &input, "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(r["status"], "ok");
}

#[test]
fn gen_three_cycle_is_exact() {
    let out = run(&["gen", "--kind", "cycle", "--n", "3", "--a", "2", "--b", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    let q: Vec<Vec<f64>> = serde_json::from_value(r["q"].clone()).unwrap();
    assert_eq!(q, vec![vec![-3.0, 1.0, 2.0], vec![2.0, -3.0, 1.0], vec![1.0, 2.0, -3.0]]);
    assert_eq!(r["convention"], "column");
}

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        let out = run(&["gen", "--kind", "reversible", "--n", "5", "--seed", "7", "--out", p.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
    }
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn gen_single_state_is_bad_size() {
    let out = run(&["gen", "--n", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("BadSize") || !out.stderr.is_empty());
}

fn csv_rows(bytes: &[u8]) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::str::from_utf8(bytes).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn simulate_full_flow_converges_to_stationary() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "3cycle.json", THREE_CYCLE);
    let out = run(&["simulate", &input, "--p0", "1,0,0", "--t", "50", "--h", "0.01"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = csv_rows(&out.stdout);
    assert_eq!(header, ["time", "p_1", "p_2", "p_3", "H", "norm2", "Phi"]);
    let last = rows.last().unwrap();
    assert!((last[0] - 50.0).abs() < 1e-12);
    for p in &last[1..4] {
        assert!((p - 1.0 / 3.0).abs() < 1e-6);
    }
}

#[test]
fn simulate_skew_flow_from_sqrt_pi_is_constant() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "3cycle.json", THREE_CYCLE);
    let s = (1.0f64 / 3.0).sqrt().to_string();
    let u0 = format!("{s},{s},{s}");
    let out = run(&["simulate", &input, "--frame", "u", "--generator", "A", "--u0", &u0, "--t", "2", "--h", "0.1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = csv_rows(&out.stdout);
    assert_eq!(header[1], "u_1");
    for row in &rows {
        for k in 1..header.len() {
            assert!((row[k] - rows[0][k]).abs() < 1e-12, "column {}", header[k]);
        }
    }
}

#[test]
fn simulate_symmetric_flow_decreases_phi() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "3cycle.json", THREE_CYCLE);
    let out = run(&["simulate", &input, "--generator", "S", "--p0", "0.7,0.2,0.1", "--t", "3", "--h", "0.05"]);
    assert_eq!(out.status.code(), Some(0));
    let (_, rows) = csv_rows(&out.stdout);
    for w in rows.windows(2) {
        assert!(w[1][6] <= w[0][6] + 1e-12);
    }
}

#[test]
fn simulate_rejects_u0_outside_skew_u_frame() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "3cycle.json", THREE_CYCLE);
    let out = run(&["simulate", &input, "--u0", "1,0,0"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["simulate", &input, "--p0", "0.5,0.6,0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn verify_small_run_passes() {
    let out = run(&["verify", "--trials", "1", "--nmax", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("overall PASS"));
}

#[test]
fn verify_fault_hook_fails_trace_suite() {
    let out = run(&["verify", "--trials", "20", "--nmax", "8", "--inject-fault"]);
    assert_ne!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("suite trace-identity  FAIL"), "{text}");
    assert!(text.contains("suite entropy         PASS"), "{text}");
}

#[test]
fn verify_writes_json_summary() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("summary.json");
    let out = run(&["verify", "--trials", "3", "--nmax", "5", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(r["pass"], true);
    assert_eq!(r["suites"].as_array().unwrap().len(), 9);
}
