use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use quantcut::circuit::{Circuit, Gate};
use quantcut::market::SyntheticMarket;
use quantcut::qaoa::WeightedGraph;
use serde_json::Value;
use tempfile::TempDir;

fn quantcut(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quantcut")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ghz(n: usize) -> Circuit {
    let mut c = Circuit::new(n).unwrap();
    c.push(Gate::H(0)).unwrap();
    for q in 0..n - 1 {
        c.push(Gate::CX { control: q, target: q + 1 }).unwrap();
    }
    c
}

#[test]
fn bell_through_a_cut_gives_zz_one() {
    let dir = TempDir::new().unwrap();
    let circ = write(&dir, "bell.json", &ghz(2).to_json());
    let obs = write(&dir, "zz.json", r#"{"terms":[{"coeff":1.0,"pauli":"Z0 Z1"}]}"#);
    let plan = dir.path().join("plan.json");

    let o = quantcut(&["cut", s(&circ), "--max-qubits", "1", "--out", s(&plan)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let p: Value = serde_json::from_str(&std::fs::read_to_string(&plan).unwrap()).unwrap();
    assert_eq!(p["cost"], 1);

    let o = quantcut(&["run", s(&circ), s(&obs), s(&plan)]);
    assert!(o.status.success());
    let r: Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert!((r["expectation"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(r["combinations"], 6);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let circ = write(&dir, "ghz.json", &ghz(4).to_json());
    // fits already
    assert_eq!(quantcut(&["cut", s(&circ), "--max-qubits", "4"]).status.code(), Some(3));
    // manual assignment with an oversized part
    assert_eq!(quantcut(&["cut", s(&circ), "--max-qubits", "2", "--manual", "0,0,0,1"]).status.code(), Some(2));
    assert_eq!(quantcut(&["cut", "/nonexistent/c.json", "--max-qubits", "2"]).status.code(), Some(2));
    let bad = write(&dir, "bad.json", "{not json");
    assert_eq!(quantcut(&["cut", s(&bad), "--max-qubits", "2"]).status.code(), Some(2));
    let prices = write(&dir, "p.csv", "when,ticker,price\n");
    assert_eq!(quantcut(&["market", s(&prices)]).status.code(), Some(2));
}

#[test]
fn combination_budget_exceeded_is_reported() {
    let dir = TempDir::new().unwrap();
    let circ = write(&dir, "ghz.json", &ghz(4).to_json());
    let obs = write(&dir, "z.json", r#"{"terms":[{"coeff":1.0,"pauli":"Z0 Z3"}]}"#);
    let plan = write(&dir, "plan.json", r#"{"assignment":[0,1,0,1],"cut_gates":[1,2,3],"cost":3}"#);
    let o = Command::new(env!("CARGO_BIN_EXE_quantcut"))
        .args(["run", s(&circ), s(&obs), s(&plan)])
        .env("QUANTCUT_COMBO_CAP", "10")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn market_alpha_above_every_weight_gives_empty_graph() {
    let dir = TempDir::new().unwrap();
    let prices = dir.path().join("prices.csv");
    let o = quantcut(&["gen-market", "--assets", "6", "--days", "60", "--out", s(&prices)]);
    assert!(o.status.success());
    let out = dir.path().join("g.json");
    let o = quantcut(&["market", s(&prices), "--alpha", "1.5", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Value = serde_json::from_str(stdout(&o).lines().next().unwrap()).unwrap();
    assert_eq!(summary["edges"], 0);
    assert_eq!(summary["assets"], 6);
    let g: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(g["edges"].as_array().unwrap().len(), 0);
    assert!(dir.path().join("g.hist.csv").exists());

    let o = quantcut(&["market", s(&prices), "--alpha", "-1.5", "--out", s(&out)]);
    let summary: Value = serde_json::from_str(stdout(&o).lines().next().unwrap()).unwrap();
    assert_eq!(summary["edges"], 15);
}

#[test]
fn market_fixture_matches_library() {
    let dir = TempDir::new().unwrap();
    let prices = write(&dir, "prices.csv", &SyntheticMarket::default().to_csv());
    let out = dir.path().join("g.json");
    let o = quantcut(&["market", s(&prices), "--out", s(&out)]);
    assert!(o.status.success());
    let summary: Value = serde_json::from_str(stdout(&o).lines().next().unwrap()).unwrap();
    assert_eq!(summary["edges"], 85);
}

#[test]
fn qaoa_writes_bounded_improving_trace() {
    let dir = TempDir::new().unwrap();
    let graph = dir.path().join("g.json");
    assert!(quantcut(&["gen-graph", "--nodes", "6", "--prob", "0.6", "--seed", "3", "--out", s(&graph)]).status.success());
    let out = dir.path().join("run");
    let o = quantcut(&["qaoa", s(&graph), "--p", "1", "--seed", "5", "--out-dir", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let csv = std::fs::read_to_string(out.join("convergence.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("iter,seconds,expectation"));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    assert!(!rows.is_empty() && rows.len() <= 200);
    let values: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    let best = values.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(best <= values[0]);
    assert!(rows.iter().all(|r| r[1] == "0"));

    let params: Value = serde_json::from_str(&std::fs::read_to_string(out.join("params.json")).unwrap()).unwrap();
    for angle in params["gamma"].as_array().unwrap().iter().chain(params["beta"].as_array().unwrap()) {
        let a = angle.as_f64().unwrap();
        assert!((0.0..std::f64::consts::TAU).contains(&a));
    }
    let sol: Value = serde_json::from_str(&std::fs::read_to_string(out.join("solution.json")).unwrap()).unwrap();
    let g = WeightedGraph::from_json(&std::fs::read_to_string(&graph).unwrap()).unwrap();
    let bits = quantcut::qaoa::parse_bitstring(sol["bitstring"].as_str().unwrap()).unwrap();
    assert_eq!(sol["cut_value"].as_f64().unwrap(), quantcut::qaoa::cut_value(&g, &bits).unwrap());
}

#[test]
fn edge_list_input_is_accepted() {
    let dir = TempDir::new().unwrap();
    let graph = write(&dir, "g.txt", "# nodes 3\n0 1 1.0\n1 2 2.0\n");
    let out = dir.path().join("run");
    let o = quantcut(&["qaoa", s(&graph), "--max-evals", "20", "--out-dir", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert_eq!(csv.lines().count(), 21);
}

#[test]
fn bisect_prints_tree() {
    let dir = TempDir::new().unwrap();
    let graph = dir.path().join("g.json");
    assert!(quantcut(&["gen-graph", "--nodes", "8", "--seed", "1", "--out", s(&graph)]).status.success());
    let o = quantcut(&["bisect", s(&graph), "--depth", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let tree: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(tree["nodes"].as_array().unwrap().len(), 8);
    let children = tree["split"]["children"].as_array().unwrap();
    assert_eq!(children.len(), 2);
    let sizes: usize = children.iter().map(|c| c["nodes"].as_array().unwrap().len()).sum();
    assert_eq!(sizes, 8);
}
