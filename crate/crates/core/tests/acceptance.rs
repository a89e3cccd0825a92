//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints exactly one PASS/FAIL line; exits non-zero if any fails.

use std::f64::consts::FRAC_PI_4;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::Instant;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;

use quantcut::circuit::{Circuit, Gate, GateMatrix, Pauli, PauliObservable, PauliString};
use quantcut::cutfinder::{self, ConnectivityGraph, CutMode, CutPlan, EdaConfig};
use quantcut::linalg;
use quantcut::market::{self, BruteForceMaxCut, SyntheticMarket};
use quantcut::qaoa::{self, CutStrategy, OptimizerConfig};
use quantcut::qpd;
use quantcut::reconstruct::{self, ExecutionBackend};
use quantcut::rng;
use quantcut::sim::{self, ReadoutNoise, Simulator};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg()) }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) { (v[m - 1] + v[m]) / 2.0 } else { v[m] }
}

fn random_local_gate(r: &mut rng::Rng, q: usize) -> Gate {
    let t = r.random::<f64>() * 6.0 - 3.0;
    match r.random_range(0..7) {
        0 => Gate::H(q),
        1 => Gate::S(q),
        2 => Gate::Rx(q, t),
        3 => Gate::Ry(q, t),
        4 => Gate::Rz(q, t),
        5 => Gate::Phase(q, t),
        _ => Gate::Sdg(q),
    }
}

fn random_two_qubit_gate(r: &mut rng::Rng, a: usize, b: usize) -> Gate {
    let t = r.random::<f64>() * 6.0 - 3.0;
    match r.random_range(0..3) {
        0 => Gate::CX { control: a, target: b },
        1 => Gate::CRZ { theta: t, control: a, target: b },
        _ => Gate::Interaction {
            theta: t,
            a1: *Pauli::ALL.choose(r).unwrap(),
            a2: *Pauli::ALL.choose(r).unwrap(),
            q1: a,
            q2: b,
        },
    }
}

/// Random circuit on two subcircuits with exactly `cuts` crossing gates.
fn random_cut_circuit(r: &mut rng::Rng, n: usize, cuts: usize) -> (Circuit, CutPlan) {
    let mut qubits: Vec<usize> = (0..n).collect();
    qubits.shuffle(r);
    let split = r.random_range(1..n);
    let mut assignment = vec![0; n];
    for &q in &qubits[split..] {
        assignment[q] = 1;
    }
    let left: Vec<usize> = (0..n).filter(|&q| assignment[q] == 0).collect();
    let right: Vec<usize> = (0..n).filter(|&q| assignment[q] == 1).collect();
    let mut c = Circuit::new(n).unwrap();
    let mut placed = 0;
    let layers = 3 + cuts;
    for layer in 0..layers {
        for q in 0..n {
            c.push(random_local_gate(r, q)).unwrap();
        }
        for side in [&left, &right] {
            if side.len() >= 2 {
                let a = *side.choose(r).unwrap();
                let b = *side.iter().filter(|&&x| x != a).collect::<Vec<_>>().choose(r).copied().unwrap();
                c.push(random_two_qubit_gate(r, a, b)).unwrap();
            }
        }
        let remaining_layers = layers - layer;
        if placed < cuts && (r.random_bool(0.5) || cuts - placed >= remaining_layers) {
            let (a, b) = (*left.choose(r).unwrap(), *right.choose(r).unwrap());
            let (a, b) = if r.random_bool(0.5) { (a, b) } else { (b, a) };
            c.push(random_two_qubit_gate(r, a, b)).unwrap();
            placed += 1;
        }
    }
    let plan = CutPlan::from_assignment(&c, cutfinder::canonicalize(&assignment));
    (c, plan)
}

fn random_observable(r: &mut rng::Rng, n: usize) -> PauliObservable {
    let mut o = PauliObservable::new();
    for _ in 0..r.random_range(1..=3) {
        let pairs: Vec<(usize, Pauli)> = (0..n)
            .filter_map(|q| if r.random_bool(0.4) { Some((q, *Pauli::ALL.choose(r).unwrap())) } else { None })
            .collect();
        o.add_term(r.random::<f64>() * 2.0 - 1.0, PauliString::from_pairs(pairs)).unwrap();
    }
    o
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut r = rng::stream(1, 0);
    let b = ExecutionBackend::exact();
    let sim = Simulator::default();
    let mut worst = 0.0f64;
    let mut cut_hist = [0usize; 4];
    for i in 0..100 {
        let n = r.random_range(4..=12);
        let cuts = r.random_range(1..=3);
        let (c, plan) = random_cut_circuit(&mut r, n, cuts);
        check(plan.cost == cuts, || format!("circuit {i}: generator produced {} cuts, wanted {cuts}", plan.cost))?;
        cut_hist[cuts] += 1;
        let state = sim.run(&c).map_err(|e| e.to_string())?;
        for _ in 0..5 {
            let o = random_observable(&mut r, n);
            let want = sim::expectation(&state, &o).map_err(|e| e.to_string())?;
            let got = reconstruct::reconstruct_expectation(&c, &o, &plan, &b).map_err(|e| e.to_string())?.expectation;
            worst = worst.max((got - want).abs());
            check((got - want).abs() <= 1e-9, || format!("circuit {i} (n={n}, cuts={cuts}): {got} vs {want}"))?;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 300.0, || format!("took {secs:.1}s, budget 300s"))?;
    Ok(format!(
        "500 observables on 100 circuits (1/2/3 cuts: {}/{}/{}), max |Δ| = {worst:.2e} ≤ 1e-9, {secs:.1}s",
        cut_hist[1], cut_hist[2], cut_hist[3]
    ))
}

fn criterion_2() -> Outcome {
    let cx = Gate::CX { control: 0, target: 1 };
    let form = cx.interaction_form().map_err(|e| e.to_string())?;
    let GateMatrix::Two(direct) = cx.matrix() else { return Err("CX is not two-qubit".into()) };
    let diff = linalg::max_abs_diff4(&form.matrix(), &direct);
    check(diff <= 1e-12, || format!("decomposition differs from CX by {diff:e}"))?;
    check(form.theta == FRAC_PI_4, || format!("CX interaction angle {}", form.theta))?;
    let a = qpd::qpd_coefficients(form.theta);
    check(a.0 == [0.5, 0.5, 0.5, -0.5, 0.5, -0.5], || format!("coefficients {:?}", a.0))?;
    check(a.one_norm() == 3.0, || format!("Σ|a| = {}", a.one_norm()))?;
    let two = qpd::sampling_overhead(&[FRAC_PI_4, FRAC_PI_4]);
    check(two == 9.0, || format!("two-cut overhead {two}"))?;
    Ok(format!("‖decomp − CX‖∞ = {diff:.1e}, a = [.5,.5,.5,−.5,.5,−.5], Σ|a| = 3, two cuts → 9"))
}

fn criterion_3() -> Outcome {
    let mut r = rng::stream(3, 0);
    let (mut valid, mut optimal) = (0, 0);
    let trials = 200;
    for t in 0..trials {
        let n = r.random_range(3..=10);
        let mut g = ConnectivityGraph::new(n);
        let density = 0.2 + 0.6 * r.random::<f64>();
        for i in 0..n {
            for j in i + 1..n {
                if r.random_bool(density) {
                    g.add(i, j, r.random_range(1..=3));
                }
            }
        }
        let max_qubits = r.random_range(n.div_ceil(3).max(1)..n);
        let cfg = EdaConfig { seed: t, ..EdaConfig::default() };
        let eda = cutfinder::eda_partition(&g, max_qubits, &cfg).map_err(|e| e.to_string())?;
        let (_, best) = cutfinder::brute_force_partition(&g, max_qubits).map_err(|e| e.to_string())?;
        if cutfinder::is_valid(&eda, max_qubits) {
            valid += 1;
        }
        let cost = g.crossing_weight(&eda);
        check(cost >= best, || format!("graph {t}: EDA cost {cost} below brute-force optimum {best}"))?;
        if cost == best {
            optimal += 1;
        }
    }
    check(valid == trials, || format!("{valid}/{trials} valid"))?;
    check(optimal * 10 >= trials * 9, || format!("{optimal}/{trials} optimal, need ≥ 90%"))?;

    let mut ghz = Circuit::new(4).unwrap();
    ghz.push(Gate::H(0)).unwrap();
    for q in 0..3 {
        ghz.push(Gate::CX { control: q, target: q + 1 }).unwrap();
    }
    let plan = cutfinder::find_cuts(&ghz, 2, &EdaConfig::default(), CutMode::Auto).map_err(|e| e.to_string())?;
    check(plan.cost == 1 && plan.cut_gates == [2], || format!("GHZ-4 plan {}", plan.to_json()))?;
    Ok(format!("{valid}/{trials} valid, {optimal}/{trials} optimal, none below optimum; GHZ-4 → 1 cut (second CX)"))
}

fn criterion_4() -> Outcome {
    let eps = 0.01;
    let noise = ReadoutNoise::symmetric(eps).unwrap();
    let b = ExecutionBackend::exact().with_noise(Some(noise));
    let graphs: Vec<_> = (0..10).map(|s| qaoa::erdos_renyi(10, 0.5, 100 + s)).collect();
    let mut medians = Vec::new();
    let mut best_params = Vec::new();
    for p in 1..=3 {
        let mut finals = Vec::new();
        for (s, g) in graphs.iter().enumerate() {
            let cfg = OptimizerConfig { seed: s as u64, ..OptimizerConfig::default() };
            let run = qaoa::optimize(g, p, &b, &CutStrategy::Uncut, &cfg).map_err(|e| e.to_string())?;
            finals.push(run.best_expectation);
            if p == 1 {
                best_params.push(run.params);
            }
        }
        medians.push(median(finals));
    }
    check(medians[1] <= medians[0] && medians[2] <= medians[1], || format!("medians p=1,2,3: {medians:?}"))?;

    // (b) noisy ⟨Z_i Z_j⟩ on the first edge of each optimized p=1 state
    let shots = 1_000_000u64;
    let atten = (1.0 - 2.0 * eps) * (1.0 - 2.0 * eps);
    let mut worst_z = 0.0f64;
    for (s, (g, params)) in graphs.iter().zip(&best_params).enumerate() {
        let (i, j, _) = g.edges()[0];
        let mut zz = PauliObservable::new();
        zz.add_term(1.0, PauliString::from_pairs([(i, Pauli::Z), (j, Pauli::Z)])).unwrap();
        let c = qaoa::build_ansatz(g, params).map_err(|e| e.to_string())?;
        let exact = reconstruct::uncut_expectation(&c, &zz, &ExecutionBackend::exact()).map_err(|e| e.to_string())?;
        let noisy = reconstruct::uncut_expectation(&c, &zz, &ExecutionBackend::shots(shots, 7 + s as u64).with_noise(Some(noise)))
            .map_err(|e| e.to_string())?;
        let mean = atten * exact.expectation;
        let sigma = ((1.0 - mean * mean) / shots as f64).sqrt();
        let z = (noisy.expectation - mean).abs() / sigma;
        worst_z = worst_z.max(z);
        check(z <= 5.0, || format!("instance {s}: {} vs {mean} ({z:.2}σ)", noisy.expectation))?;
    }
    Ok(format!(
        "median best ⟨H_C⟩ p=1,2,3: {:.4} ≥ {:.4} ≥ {:.4}; noisy ⟨ZZ⟩ within {worst_z:.2}σ of (1−2ε)² attenuation",
        medians[0], medians[1], medians[2]
    ))
}

fn criterion_5() -> Outcome {
    let csv = SyntheticMarket::default().to_csv();
    let ingested = market::ingest_reader(csv.as_bytes()).map_err(|e| e.to_string())?;
    check(ingested.series.len() == 16, || format!("{} assets", ingested.series.len()))?;
    let mg = market::market_graph_from_series(&ingested.series, 0.2).map_err(|e| e.to_string())?;
    let g = &mg.graph;
    let total = g.total_weight();
    let conserve = |x: &[bool]| -> Result<(), String> {
        let a: Vec<usize> = (0..g.n()).filter(|&v| !x[v]).collect();
        let b: Vec<usize> = (0..g.n()).filter(|&v| x[v]).collect();
        let lhs = market::acum(g, &a).unwrap() + market::acum(g, &b).unwrap() + qaoa::cut_value(g, x).unwrap();
        check(lhs == total, || format!("Acum + Acum + cut = {lhs} ≠ {total}"))
    };

    let b = ExecutionBackend::exact();
    let mut qaoa_cuts = Vec::new();
    for seed in 0..10 {
        let cfg = OptimizerConfig { seed, ..OptimizerConfig::default() };
        let run = qaoa::optimize(g, 1, &b, &CutStrategy::Uncut, &cfg).map_err(|e| e.to_string())?;
        let x = qaoa::extract_solution(g, &run.params, &Simulator::default()).map_err(|e| e.to_string())?;
        conserve(&x)?;
        qaoa_cuts.push(qaoa::cut_value(g, &x).unwrap());
    }
    let qaoa_mean = qaoa_cuts.iter().sum::<f64>() / qaoa_cuts.len() as f64;

    let mut r = rng::stream(5, 0);
    let samples = 10_000;
    let mut random_sum = 0.0;
    for _ in 0..samples {
        let x: Vec<bool> = (0..g.n()).map(|_| r.random()).collect();
        conserve(&x)?;
        random_sum += qaoa::cut_value(g, &x).unwrap();
    }
    let random_mean = random_sum / samples as f64;
    check(qaoa_mean > random_mean, || format!("QAOA mean {qaoa_mean} ≤ random mean {random_mean}"))?;

    let tree = market::repeated_bisection(g, 2, &BruteForceMaxCut).map_err(|e| e.to_string())?;
    for split in tree.splits() {
        let [a, c] = &*split.children;
        let sub: Vec<usize> = a.nodes.iter().chain(&c.nodes).copied().collect();
        let parent = market::acum(g, &sub).unwrap();
        let lhs = split.acum[0] + split.acum[1] + split.cut_value;
        check(lhs == parent, || format!("bisection split: {lhs} ≠ {parent}"))?;
    }
    Ok(format!(
        "{} edges; QAOA p=1 mean cut {qaoa_mean:.4} > random mean {random_mean:.4}; conservation exact on {} splits",
        g.edges().len(),
        qaoa_cuts.len() + samples + tree.splits().len()
    ))
}

fn criterion_6() -> Outcome {
    let mut graphs = 0;
    let mut states = 0usize;
    for n in 2..=10 {
        for (k, prob) in [0.3, 0.6, 1.0].into_iter().enumerate() {
            let mut g = qaoa::erdos_renyi(n, prob, (n * 10 + k) as u64);
            if k == 0 {
                // non-unit weights on one instance per size
                let mut r = rng::stream(n as u64, 6);
                let edges: Vec<_> = g.edges().iter().map(|&(i, j, _)| (i, j, r.random::<f64>() * 2.0)).collect();
                g = qaoa::WeightedGraph::new(n, edges).unwrap();
            }
            let h = qaoa::maxcut_hamiltonian(&g);
            for idx in 0..1usize << n {
                let x = qaoa::bits_of(idx, n);
                let e = qaoa::basis_energy(&h, &x).map_err(|e| e.to_string())?;
                let cut = qaoa::cut_value(&g, &x).unwrap();
                check((e + cut).abs() <= 1e-12, || format!("n={n} x={}: ⟨x|H|x⟩ = {e}, cut = {cut}", qaoa::format_bits(&x)))?;
                states += 1;
            }
            graphs += 1;
        }
    }
    Ok(format!("{states} basis states over {graphs} graphs (n = 2..10): ⟨x|H_C|x⟩ = −cut(x) within 1e-12"))
}

fn criterion_7() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_quantcut");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let big = dir.path().join("g10.json");
    std::fs::write(&big, qaoa::erdos_renyi(10, 0.5, 70).to_json()).unwrap();
    let ring = dir.path().join("ring6.json");
    let ring_graph = qaoa::WeightedGraph::new(6, (0..6).map(|i| (i, (i + 1) % 6, 1.0))).unwrap();
    std::fs::write(&ring, ring_graph.to_json()).unwrap();

    let scenarios: [(&str, &std::path::Path, Vec<&str>); 3] = [
        ("uncut exact", &big, vec!["--p", "2"]),
        ("cut exact", &ring, vec!["--p", "1", "--max-qubits", "3", "--max-evals", "60"]),
        ("cut shots+noise", &ring, vec!["--p", "1", "--max-qubits", "3", "--max-evals", "40", "--mode", "shots", "--shots", "20000", "--noise", "0.01"]),
    ];
    let mut compared = 0;
    for (name, graph, extra) in &scenarios {
        let mut outputs = Vec::new();
        for (run, workers) in ["1", "4", "4", "8"].iter().enumerate() {
            let out_dir = dir.path().join(format!("{}-{run}", name.replace(['+', ' '], "_")));
            let status = Command::new(bin)
                .args(["--workers", workers, "qaoa"])
                .arg(graph)
                .args(["--seed", "11", "--out-dir"])
                .arg(&out_dir)
                .args(extra)
                .output()
                .map_err(|e| e.to_string())?;
            check(status.status.success(), || {
                format!("{name}: exit {:?}: {}", status.status.code(), String::from_utf8_lossy(&status.stderr))
            })?;
            outputs.push((
                std::fs::read(out_dir.join("convergence.csv")).unwrap(),
                std::fs::read(out_dir.join("params.json")).unwrap(),
                std::fs::read(out_dir.join("solution.json")).unwrap(),
            ));
        }
        for o in &outputs[1..] {
            check(o.0 == outputs[0].0, || format!("{name}: convergence CSVs differ"))?;
            check(o.1 == outputs[0].1 && o.2 == outputs[0].2, || format!("{name}: JSON outputs differ"))?;
            compared += 1;
        }
        check(outputs[0].0.len() > 100, || format!("{name}: CSV suspiciously short"))?;
    }
    Ok(format!("{compared} repeat runs across --workers 1/4/8 byte-identical (CSV + JSON) in 3 scenarios"))
}

fn criterion_8() -> Outcome {
    let mut parts = Vec::new();
    for (name, n, assignment) in [("Bell", 2, vec![0, 1]), ("GHZ-3", 3, vec![0, 0, 1]), ("GHZ-3", 3, vec![0, 1, 0])] {
        let mut c = Circuit::new(n).unwrap();
        c.push(Gate::H(0)).unwrap();
        for q in 0..n - 1 {
            c.push(Gate::CX { control: q, target: q + 1 }).unwrap();
        }
        let plan = CutPlan::from_assignment(&c, assignment);
        let rebuilt = reconstruct::reconstruct_statevector(&c, &plan, &ExecutionBackend::exact()).map_err(|e| e.to_string())?;
        let direct = Simulator::default().run(&c).unwrap();
        let f = rebuilt.fidelity(&direct);
        check(f >= 1.0 - 1e-8, || format!("{name}: fidelity {f}"))?;
        parts.push(format!("{name} ({} cut{}) F = 1 − {:.1e}", plan.cost, if plan.cost == 1 { "" } else { "s" }, (1.0 - f).max(0.0)));
    }
    Ok(parts.join(", "))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("QPD channel identity on random cut circuits", criterion_1),
        ("CNOT decomposition and quasiprobabilities", criterion_2),
        ("cut finder validity and optimality", criterion_3),
        ("noisy QAOA layer monotonicity and readout attenuation", criterion_4),
        ("QAOA beats random cuts; Acum conservation", criterion_5),
        ("energy/cut duality", criterion_6),
        ("CLI determinism across worker counts", criterion_7),
        ("state reconstruction fidelity", criterion_8),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} PASS [{secs:.1}s] {name}: {detail}", k + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} FAIL [{secs:.1}s] {name}: {why}", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
