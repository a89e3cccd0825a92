//! QAOA for weighted Max-Cut, with optional circuit cutting in the loop.

use std::f64::consts::PI;
use std::time::Instant;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{Circuit, CircuitError, Gate, Pauli, PauliObservable, PauliString};
use crate::cutfinder::{self, CutError, CutMode, CutPlan, EdaConfig};
use crate::optim::{Minimizer, NelderMead};
use crate::reconstruct::{self, ExecutionBackend, ReconstructError};
use crate::rng;
use crate::sim::{self, SimError, Simulator};

pub const DEFAULT_MAX_EVALS: usize = 200;

/// Amplitude-probability ties closer than this go to the smallest index.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QaoaError {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("assignment has {got} entries, graph has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Reconstruct(#[from] ReconstructError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Cut(#[from] CutError),
}

impl From<CircuitError> for QaoaError {
    fn from(e: CircuitError) -> Self {
        QaoaError::Reconstruct(e.into())
    }
}

/// Undirected graph with finite edge weights. Negative weights appear in
/// market graphs thresholded below zero. Sums over edges run in edge order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl TryFrom<GraphRepr> for WeightedGraph {
    type Error = QaoaError;
    fn try_from(r: GraphRepr) -> Result<Self, QaoaError> {
        WeightedGraph::new(r.n, r.edges)
    }
}

impl From<WeightedGraph> for GraphRepr {
    fn from(g: WeightedGraph) -> Self {
        GraphRepr { n: g.n, edges: g.edges }
    }
}

impl WeightedGraph {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self, QaoaError> {
        let mut g = WeightedGraph { n, edges: Vec::new() };
        for (i, j, w) in edges {
            g.add_edge(i, j, w)?;
        }
        Ok(g)
    }

    pub fn add_edge(&mut self, i: usize, j: usize, w: f64) -> Result<(), QaoaError> {
        if i == j {
            return Err(QaoaError::InvalidGraph(format!("self-loop on node {i}")));
        }
        if i >= self.n || j >= self.n {
            return Err(QaoaError::InvalidGraph(format!("edge ({i},{j}) outside {} nodes", self.n)));
        }
        if !w.is_finite() {
            return Err(QaoaError::InvalidGraph(format!("weight {w} on edge ({i},{j})")));
        }
        self.edges.push((i, j, w));
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.2).fold(0.0, |acc, w| acc + w)
    }

    /// Graph induced on `nodes`, relabelled `0..nodes.len()` in the given order.
    pub fn induced(&self, nodes: &[usize]) -> WeightedGraph {
        let mut local = vec![usize::MAX; self.n];
        for (k, &v) in nodes.iter().enumerate() {
            local[v] = k;
        }
        let edges = self
            .edges
            .iter()
            .filter(|(i, j, _)| local[*i] != usize::MAX && local[*j] != usize::MAX)
            .map(|&(i, j, w)| (local[i], local[j], w))
            .collect();
        WeightedGraph { n: nodes.len(), edges }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("graph serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, QaoaError> {
        serde_json::from_str(s).map_err(|e| QaoaError::InvalidGraph(e.to_string()))
    }

    /// `i j w` per line; blank lines and `#` comments skipped. The node count
    /// is one past the largest index unless a `# nodes N` line raises it.
    pub fn from_edge_list(s: &str) -> Result<Self, QaoaError> {
        let mut edges = Vec::new();
        let mut n = 0;
        for (lineno, line) in s.lines().enumerate() {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(v) = rest.trim().strip_prefix("nodes") {
                    n = n.max(v.trim().parse().map_err(|_| QaoaError::InvalidGraph(format!("line {}", lineno + 1)))?);
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let bad = || QaoaError::InvalidGraph(format!("line {}: expected `i j w`", lineno + 1));
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(bad());
            }
            let i: usize = f[0].parse().map_err(|_| bad())?;
            let j: usize = f[1].parse().map_err(|_| bad())?;
            let w: f64 = f[2].parse().map_err(|_| bad())?;
            n = n.max(i + 1).max(j + 1);
            edges.push((i, j, w));
        }
        WeightedGraph::new(n, edges)
    }

    pub fn to_edge_list(&self) -> String {
        let mut s = format!("# nodes {}\n", self.n);
        for (i, j, w) in &self.edges {
            s.push_str(&format!("{i} {j} {w}\n"));
        }
        s
    }
}

/// G(n, p) with unit weights; each pair is decided by one uniform draw in
/// lexicographic pair order.
pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> WeightedGraph {
    let mut r = rng::stream(seed, 0x6e72);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if r.random::<f64>() < p {
                edges.push((i, j, 1.0));
            }
        }
    }
    WeightedGraph { n, edges }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaoaParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl QaoaParams {
    pub fn new(gamma: Vec<f64>, beta: Vec<f64>) -> Result<Self, QaoaError> {
        if gamma.is_empty() || gamma.len() != beta.len() {
            return Err(QaoaError::InvalidParams(format!("|γ|={} |β|={}", gamma.len(), beta.len())));
        }
        if gamma.iter().chain(&beta).any(|v| !v.is_finite()) {
            return Err(QaoaError::InvalidParams("non-finite angle".into()));
        }
        Ok(QaoaParams { gamma, beta })
    }

    pub fn p(&self) -> usize {
        self.gamma.len()
    }

    /// Flat `[γ₁..γ_p, β₁..β_p]`.
    pub fn to_vec(&self) -> Vec<f64> {
        self.gamma.iter().chain(&self.beta).copied().collect()
    }

    /// Inverse of [`QaoaParams::to_vec`], wrapping every angle into `[0, 2π)`.
    pub fn from_flat(x: &[f64]) -> Result<Self, QaoaError> {
        let p = x.len() / 2;
        let wrap = |v: &f64| {
            let w = v.rem_euclid(2.0 * PI);
            if w >= 2.0 * PI { 0.0 } else { w }
        };
        QaoaParams::new(x[..p].iter().map(wrap).collect(), x[p..].iter().map(wrap).collect())
    }
}

/// `Σ (w/2)(Z_i Z_j − I)`; identity parts are merged into one constant term.
pub fn maxcut_hamiltonian(g: &WeightedGraph) -> PauliObservable {
    let mut h = PauliObservable::new();
    let mut constant = 0.0;
    for &(i, j, w) in g.edges() {
        h.add_term(w / 2.0, PauliString::from_pairs([(i, Pauli::Z), (j, Pauli::Z)])).expect("finite weight");
        constant -= w / 2.0;
    }
    if !g.edges().is_empty() {
        h.add_term(constant, PauliString::identity()).expect("finite weight");
    }
    h
}

/// Symmetric cut weight: edges whose endpoints differ.
pub fn cut_value(g: &WeightedGraph, x: &[bool]) -> Result<f64, QaoaError> {
    if x.len() != g.n() {
        return Err(QaoaError::LengthMismatch { expected: g.n(), got: x.len() });
    }
    Ok(g.edges().iter().filter(|(i, j, _)| x[*i] != x[*j]).map(|e| e.2).fold(0.0, |acc, w| acc + w))
}

/// Parses a bitstring printed with node `n−1` leftmost.
pub fn parse_bitstring(s: &str) -> Result<Vec<bool>, QaoaError> {
    s.chars()
        .rev()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            _ => Err(QaoaError::InvalidParams(format!("bad bit {c:?} in {s:?}"))),
        })
        .collect()
}

pub fn bits_of(index: usize, n: usize) -> Vec<bool> {
    (0..n).map(|q| index >> q & 1 == 1).collect()
}

/// H on all qubits, then per layer a CRZ(2γw) per edge and Rx(2β) per qubit.
pub fn build_ansatz(g: &WeightedGraph, params: &QaoaParams) -> Result<Circuit, QaoaError> {
    let mut c = Circuit::new(g.n())?;
    for q in 0..g.n() {
        c.push(Gate::H(q))?;
    }
    for (gamma, beta) in params.gamma.iter().zip(&params.beta) {
        for &(i, j, w) in g.edges() {
            c.push(Gate::CRZ { theta: 2.0 * gamma * w, control: i, target: j })?;
        }
        for q in 0..g.n() {
            c.push(Gate::Rx(q, 2.0 * beta))?;
        }
    }
    Ok(c)
}

/// How expectation evaluations are split into subcircuits.
#[derive(Debug, Clone, PartialEq)]
pub enum CutStrategy {
    Uncut,
    Plan(CutPlan),
    /// Search for a plan on the first evaluation; reused afterwards.
    Auto { max_qubits: usize, eda: EdaConfig },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogEntry {
    pub iter: usize,
    pub seconds: f64,
    pub expectation: f64,
    pub params: QaoaParams,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ConvergenceLog {
    entries: Vec<LogEntry>,
}

impl ConvergenceLog {
    pub fn push(&mut self, entry: LogEntry) {
        if let Some(last) = self.entries.last() {
            assert!(entry.iter > last.iter, "iterations must increase");
        }
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn best(&self) -> Option<&LogEntry> {
        self.entries.iter().min_by(|a, b| a.expectation.total_cmp(&b.expectation).then(a.iter.cmp(&b.iter)))
    }

    /// `iter,seconds,expectation`; `with_clock = false` writes zero seconds so
    /// output depends only on the inputs.
    pub fn to_csv(&self, with_clock: bool) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["iter", "seconds", "expectation"]).expect("in-memory write");
        for e in &self.entries {
            let secs = if with_clock { format!("{:.6}", e.seconds) } else { "0".to_string() };
            w.write_record([e.iter.to_string(), secs, e.expectation.to_string()]).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("ascii")
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    pub max_evals: usize,
    /// Seeds the initial angles.
    pub seed: u64,
    pub minimizer: NelderMead,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { max_evals: DEFAULT_MAX_EVALS, seed: 0, minimizer: NelderMead::default() }
    }
}

#[derive(Debug, Clone)]
pub struct QaoaRun {
    pub params: QaoaParams,
    pub best_expectation: f64,
    pub log: ConvergenceLog,
    pub plan: Option<CutPlan>,
    pub max_evals_reached: bool,
}

/// Angles drawn uniformly from `[0, 2π)`.
pub fn initial_params(p: usize, seed: u64) -> QaoaParams {
    let mut r = rng::stream(seed, 0x1a17);
    let x: Vec<f64> = (0..2 * p).map(|_| r.random::<f64>() * 2.0 * PI).collect();
    QaoaParams::from_flat(&x).expect("p ≥ 1")
}

/// `⟨H_C⟩` of the ansatz, through the plan when one is given.
pub fn energy(
    g: &WeightedGraph,
    params: &QaoaParams,
    plan: Option<&CutPlan>,
    backend: &ExecutionBackend,
) -> Result<f64, QaoaError> {
    let c = build_ansatz(g, params)?;
    let h = maxcut_hamiltonian(g);
    Ok(reconstruct::expectation_with(&c, &h, plan, backend)?.expectation)
}

/// Minimizes `⟨H_C⟩` over `2p` angles with [`NelderMead`].
pub fn optimize(
    g: &WeightedGraph,
    p: usize,
    backend: &ExecutionBackend,
    cut: &CutStrategy,
    cfg: &OptimizerConfig,
) -> Result<QaoaRun, QaoaError> {
    optimize_with(g, p, backend, cut, cfg, &cfg.minimizer)
}

/// [`optimize`] with any [`Minimizer`].
pub fn optimize_with<M: Minimizer>(
    g: &WeightedGraph,
    p: usize,
    backend: &ExecutionBackend,
    cut: &CutStrategy,
    cfg: &OptimizerConfig,
    minimizer: &M,
) -> Result<QaoaRun, QaoaError> {
    if p == 0 {
        return Err(QaoaError::InvalidParams("p must be at least 1".into()));
    }
    let start = Instant::now();
    let mut plan: Option<CutPlan> = match cut {
        CutStrategy::Plan(pl) => Some(pl.clone()),
        _ => None,
    };
    let mut planned = !matches!(cut, CutStrategy::Auto { .. });
    let mut log = ConvergenceLog::default();

    let mut objective = |x: &[f64]| -> Result<f64, QaoaError> {
        let params = QaoaParams::from_flat(x)?;
        if !planned {
            if let CutStrategy::Auto { max_qubits, eda } = cut {
                let c = build_ansatz(g, &params)?;
                plan = match cutfinder::find_cuts(&c, *max_qubits, eda, CutMode::Auto) {
                    Ok(pl) => Some(pl),
                    Err(CutError::NoCutNeeded { .. }) => None,
                    Err(e) => return Err(e.into()),
                };
                if let Some(pl) = &plan {
                    log::info!("cut plan: {} cuts over {} subcircuits", pl.cost, pl.n_parts());
                }
            }
            planned = true;
        }
        let iter = log.entries().len() + 1;
        let b = backend.reseeded(iter as u64);
        let e = energy(g, &params, plan.as_ref(), &b)?;
        log.push(LogEntry { iter, seconds: start.elapsed().as_secs_f64(), expectation: e, params });
        Ok(e)
    };

    let x0 = initial_params(p, cfg.seed).to_vec();
    let outcome = minimizer.minimize(&mut objective, &x0, cfg.max_evals)?;
    let params = QaoaParams::from_flat(&outcome.x)?;
    Ok(QaoaRun {
        params,
        best_expectation: outcome.value,
        log,
        plan,
        max_evals_reached: outcome.max_evals_reached,
    })
}

/// Most probable basis state of the ansatz; near-ties go to the smallest index.
pub fn extract_solution(g: &WeightedGraph, params: &QaoaParams, sim: &Simulator) -> Result<Vec<bool>, QaoaError> {
    let state = sim.run(&build_ansatz(g, params)?)?;
    let probs = state.probabilities();
    let mut best = 0;
    for (i, &pr) in probs.iter().enumerate() {
        if pr > probs[best] + TIE_TOLERANCE {
            best = i;
        }
    }
    Ok(bits_of(best, g.n()))
}

pub fn format_bits(x: &[bool]) -> String {
    x.iter().rev().map(|&b| if b { '1' } else { '0' }).collect()
}

/// `⟨x|H_C|x⟩` for the basis state `x`, via the simulator's expectation.
pub fn basis_energy(h: &PauliObservable, x: &[bool]) -> Result<f64, QaoaError> {
    let index = x.iter().enumerate().fold(0usize, |acc, (q, &b)| acc | (b as usize) << q);
    let mut amps = vec![num_complex::Complex64::new(0.0, 0.0); 1 << x.len()];
    amps[index] = num_complex::Complex64::new(1.0, 0.0);
    let state = sim::StateVector::from_amplitudes(amps)?;
    Ok(sim::expectation(&state, h)?)
}
