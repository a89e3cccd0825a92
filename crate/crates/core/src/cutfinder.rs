//! Automatic gate-cut placement.
//!
//! A solution is a qubit → subcircuit assignment. The cost of a valid
//! assignment is the number of two-qubit gates whose qubits land in different
//! subcircuits; invalid assignments (fewer than two parts, or a part above the
//! qubit budget) score the penalty `δ`, which exceeds every valid cost.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::Circuit;
use crate::rng;

/// Largest circuit the exhaustive oracle accepts.
pub const ORACLE_MAX_QUBITS: usize = 14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CutError {
    #[error("circuit has {n_qubits} qubits, within the budget of {max_qubits}; no cut needed")]
    NoCutNeeded { n_qubits: usize, max_qubits: usize },
    #[error("no valid partition exists")]
    Infeasible,
    #[error("invalid manual assignment: {0}")]
    ManualInvalid(String),
    #[error("{0} qubits is too large for the exhaustive oracle (max {ORACLE_MAX_QUBITS})")]
    TooLargeForOracle(usize),
    #[error("max_qubits must be at least 1")]
    ZeroBudget,
    #[error("cut plan does not match circuit: {0}")]
    PlanMismatch(String),
    #[error("malformed cut plan JSON: {0}")]
    Json(String),
}

/// Two-qubit gate counts per unordered qubit pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectivityGraph {
    n: usize,
    weights: BTreeMap<(usize, usize), usize>,
}

impl ConnectivityGraph {
    pub fn new(n: usize) -> Self {
        ConnectivityGraph { n, weights: BTreeMap::new() }
    }

    /// Adds `w` gates between `i` and `j`.
    pub fn add(&mut self, i: usize, j: usize, w: usize) {
        assert!(i != j && i < self.n && j < self.n, "bad edge ({i}, {j})");
        if w > 0 {
            *self.weights.entry((i.min(j), i.max(j))).or_insert(0) += w;
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weight(&self, i: usize, j: usize) -> usize {
        self.weights.get(&(i.min(j), i.max(j))).copied().unwrap_or(0)
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.weights.iter().map(|(&(i, j), &w)| (i, j, w))
    }

    pub fn total_weight(&self) -> usize {
        self.weights.values().sum()
    }

    /// Σ w_ij over pairs split by `assignment`.
    pub fn crossing_weight(&self, assignment: &[usize]) -> usize {
        self.edges().filter(|&(i, j, _)| assignment[i] != assignment[j]).map(|(_, _, w)| w).sum()
    }

    fn dense(&self) -> Vec<Vec<usize>> {
        let mut m = vec![vec![0; self.n]; self.n];
        for (i, j, w) in self.edges() {
            m[i][j] = w;
            m[j][i] = w;
        }
        m
    }
}

pub fn connectivity(c: &Circuit) -> ConnectivityGraph {
    let mut g = ConnectivityGraph::new(c.n_qubits());
    for gate in c.gates().iter().filter(|g| g.is_two_qubit()) {
        let qs = gate.qubits();
        g.add(qs[0], qs[1], 1);
    }
    g
}

/// Relabels parts in order of first appearance.
pub fn canonicalize(assignment: &[usize]) -> Vec<usize> {
    let mut map: BTreeMap<usize, usize> = BTreeMap::new();
    assignment
        .iter()
        .map(|&a| {
            let next = map.len();
            *map.entry(a).or_insert(next)
        })
        .collect()
}

/// Sizes of the non-empty parts.
fn part_sizes(assignment: &[usize]) -> Vec<usize> {
    let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for &a in assignment {
        *sizes.entry(a).or_insert(0) += 1;
    }
    sizes.into_values().collect()
}

/// At least two non-empty parts, none above `max_qubits`.
pub fn is_valid(assignment: &[usize], max_qubits: usize) -> bool {
    let sizes = part_sizes(assignment);
    sizes.len() >= 2 && sizes.iter().all(|&s| s <= max_qubits)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdaConfig {
    pub population: usize,
    pub generations: usize,
    pub selection_fraction: f64,
    /// Penalty for invalid solutions; `None` means `1 + Σ w_ij`.
    pub penalty: Option<f64>,
    pub seed: u64,
}

impl Default for EdaConfig {
    fn default() -> Self {
        EdaConfig { population: 120, generations: 60, selection_fraction: 0.3, penalty: None, seed: 0 }
    }
}

/// Lower bound on every categorical marginal, keeping the search alive.
const MARGINAL_FLOOR: f64 = 0.02;

fn cmp_candidates(a: (f64, &[usize]), b: (f64, &[usize])) -> Ordering {
    let fa = if a.0.is_nan() { f64::INFINITY } else { a.0 };
    let fb = if b.0.is_nan() { f64::INFINITY } else { b.0 };
    fa.partial_cmp(&fb).unwrap_or(Ordering::Equal).then_with(|| a.1.cmp(b.1))
}

/// Univariate-marginal estimation of distribution algorithm over categorical
/// vectors of length `n` with `k` labels. Returns the best vector ever
/// evaluated (ties go to the lexicographically smallest).
pub fn eda_minimize<F>(objective: F, n: usize, k: usize, cfg: &EdaConfig) -> Vec<usize>
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    eda_minimize_seeded(objective, n, k, cfg, false, &[])
}

/// [`eda_minimize`] with optional label canonicalization (for objectives that
/// are invariant under part relabelling) and injected initial individuals.
pub fn eda_minimize_seeded<F>(
    objective: F,
    n: usize,
    k: usize,
    cfg: &EdaConfig,
    canonical: bool,
    seeds: &[Vec<usize>],
) -> Vec<usize>
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    assert!(k >= 1, "need at least one label");
    if n == 0 {
        return Vec::new();
    }
    let pop = cfg.population.max(3);
    let elite = ((pop as f64 * cfg.selection_fraction).ceil() as usize).clamp(2, pop - 1);
    let mut rng = rng::stream(cfg.seed, 0);
    let mut marginals = vec![vec![1.0 / k as f64; k]; n];
    let mut best: Option<(f64, Vec<usize>)> = None;

    for generation in 0..cfg.generations.max(1) {
        let mut population: Vec<Vec<usize>> = (0..pop)
            .map(|_| {
                let v: Vec<usize> = marginals.iter().map(|p| sample_categorical(p, &mut rng)).collect();
                if canonical { canonicalize(&v) } else { v }
            })
            .collect();
        if generation == 0 {
            for (slot, s) in population.iter_mut().zip(seeds) {
                *slot = if canonical { canonicalize(s) } else { s.clone() };
            }
        }
        let fitness: Vec<f64> = population.par_iter().map(|v| objective(v)).collect();
        let mut order: Vec<usize> = (0..pop).collect();
        order.sort_by(|&a, &b| cmp_candidates((fitness[a], &population[a]), (fitness[b], &population[b])));

        let top = order[0];
        let improves = match &best {
            None => true,
            Some((bf, bv)) => cmp_candidates((fitness[top], &population[top]), (*bf, bv)) == Ordering::Less,
        };
        if improves {
            best = Some((fitness[top], population[top].clone()));
        }

        let mut counts = vec![vec![0.0; k]; n];
        for &i in &order[..elite] {
            for (pos, &label) in population[i].iter().enumerate() {
                counts[pos][label] += 1.0;
            }
        }
        for (p, c) in marginals.iter_mut().zip(counts) {
            let mut total = 0.0;
            for (pl, cl) in p.iter_mut().zip(c) {
                *pl = (cl / elite as f64).max(MARGINAL_FLOOR);
                total += *pl;
            }
            p.iter_mut().for_each(|x| *x /= total);
        }
    }
    best.expect("at least one generation").1
}

fn sample_categorical(p: &[f64], rng: &mut rng::Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

/// Qubit → subcircuit assignment plus the gates it cuts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutPlan {
    pub assignment: Vec<usize>,
    pub cut_gates: Vec<usize>,
    pub cost: usize,
}

impl CutPlan {
    /// Builds the plan induced by `assignment` on `c`.
    pub fn from_assignment(c: &Circuit, assignment: Vec<usize>) -> CutPlan {
        let cut_gates: Vec<usize> = c
            .gates()
            .iter()
            .enumerate()
            .filter(|(_, g)| {
                let qs = g.qubits();
                qs.len() == 2 && assignment[qs[0]] != assignment[qs[1]]
            })
            .map(|(i, _)| i)
            .collect();
        let cost = cut_gates.len();
        CutPlan { assignment, cut_gates, cost }
    }

    pub fn n_parts(&self) -> usize {
        self.assignment.iter().max().map_or(0, |m| m + 1)
    }

    /// Sorted global qubits of each part.
    pub fn parts(&self) -> Vec<Vec<usize>> {
        let mut parts = vec![Vec::new(); self.n_parts()];
        for (q, &p) in self.assignment.iter().enumerate() {
            parts[p].push(q);
        }
        parts
    }

    pub fn max_part_size(&self) -> usize {
        self.parts().iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Checks the plan against a circuit: labels contiguous, every part
    /// non-empty, and `cut_gates`/`cost` equal to the recount.
    pub fn check(&self, c: &Circuit) -> Result<(), CutError> {
        if self.assignment.len() != c.n_qubits() {
            return Err(CutError::PlanMismatch(format!(
                "assignment has {} entries for {} qubits",
                self.assignment.len(),
                c.n_qubits()
            )));
        }
        if self.parts().iter().any(Vec::is_empty) {
            return Err(CutError::PlanMismatch("empty subcircuit label".into()));
        }
        let recount = CutPlan::from_assignment(c, self.assignment.clone());
        if recount.cut_gates != self.cut_gates || recount.cost != self.cost {
            return Err(CutError::PlanMismatch("cut_gates/cost disagree with the circuit".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plan serializes")
    }

    pub fn from_json(s: &str) -> Result<CutPlan, CutError> {
        serde_json::from_str(s).map_err(|e| CutError::Json(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CutMode {
    Auto,
    Manual(Vec<usize>),
}

/// Lowest-cost partition of `graph` found by the EDA, canonicalized.
pub fn eda_partition(graph: &ConnectivityGraph, max_qubits: usize, cfg: &EdaConfig) -> Result<Vec<usize>, CutError> {
    let n = graph.n();
    if max_qubits == 0 {
        return Err(CutError::ZeroBudget);
    }
    if n <= max_qubits {
        return Err(CutError::NoCutNeeded { n_qubits: n, max_qubits });
    }
    let delta = cfg.penalty.unwrap_or(1.0 + graph.total_weight() as f64);
    let objective = |a: &[usize]| -> f64 {
        if is_valid(a, max_qubits) {
            graph.crossing_weight(a) as f64
        } else {
            delta
        }
    };
    // consecutive blocks of max_qubits: always valid
    let fill: Vec<usize> = (0..n).map(|q| q / max_qubits).collect();
    let k = n.div_ceil(max_qubits);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for labels in [k, (k + 1).min(n)] {
        let mut sub = cfg.clone();
        sub.seed = rng::mix(cfg.seed, labels as u64);
        let cand = eda_minimize_seeded(objective, n, labels, &sub, true, std::slice::from_ref(&fill));
        let f = objective(&cand);
        if best.as_ref().is_none_or(|(bf, bv)| cmp_candidates((f, &cand), (*bf, bv)) == Ordering::Less) {
            best = Some((f, cand));
        }
        if labels == n {
            break;
        }
    }
    let (_, assignment) = best.expect("searched at least once");
    if !is_valid(&assignment, max_qubits) {
        return Err(CutError::Infeasible);
    }
    Ok(assignment)
}

/// Exhaustive minimum-cost partition of `graph`, ties broken by the
/// lexicographically smallest canonical assignment.
pub fn brute_force_partition(graph: &ConnectivityGraph, max_qubits: usize) -> Result<(Vec<usize>, usize), CutError> {
    let n = graph.n();
    if max_qubits == 0 {
        return Err(CutError::ZeroBudget);
    }
    if n > ORACLE_MAX_QUBITS {
        return Err(CutError::TooLargeForOracle(n));
    }
    if n <= max_qubits {
        return Err(CutError::NoCutNeeded { n_qubits: n, max_qubits });
    }
    struct Search<'a> {
        w: &'a [Vec<usize>],
        max: usize,
        assign: Vec<usize>,
        sizes: Vec<usize>,
        best: Option<(usize, Vec<usize>)>,
    }
    impl Search<'_> {
        fn go(&mut self, pos: usize, cost: usize) {
            let n = self.w.len();
            if let Some((b, _)) = &self.best {
                if cost >= *b {
                    return;
                }
            }
            if pos == n {
                if self.sizes.len() >= 2 {
                    self.best = Some((cost, self.assign.clone()));
                }
                return;
            }
            let used = self.sizes.len();
            for label in 0..=used.min(n - 1) {
                if label < used && self.sizes[label] == self.max {
                    continue;
                }
                let added: usize = (0..pos).filter(|&j| self.assign[j] != label).map(|j| self.w[pos][j]).sum();
                self.assign.push(label);
                if label == used {
                    self.sizes.push(1);
                } else {
                    self.sizes[label] += 1;
                }
                self.go(pos + 1, cost + added);
                self.assign.pop();
                if label == used {
                    self.sizes.pop();
                } else {
                    self.sizes[label] -= 1;
                }
            }
        }
    }
    let w = graph.dense();
    let mut s = Search { w: &w, max: max_qubits, assign: Vec::with_capacity(n), sizes: Vec::new(), best: None };
    s.go(0, 0);
    let (cost, assignment) = s.best.ok_or(CutError::Infeasible)?;
    Ok((assignment, cost))
}

/// Exhaustive oracle for [`find_cuts`].
pub fn brute_force_cuts(c: &Circuit, max_qubits: usize) -> Result<CutPlan, CutError> {
    let (assignment, _) = brute_force_partition(&connectivity(c), max_qubits)?;
    Ok(CutPlan::from_assignment(c, assignment))
}

/// Chooses which gates to cut so every subcircuit fits in `max_qubits`.
pub fn find_cuts(c: &Circuit, max_qubits: usize, cfg: &EdaConfig, mode: CutMode) -> Result<CutPlan, CutError> {
    let n = c.n_qubits();
    if max_qubits == 0 {
        return Err(CutError::ZeroBudget);
    }
    if n <= max_qubits {
        return Err(CutError::NoCutNeeded { n_qubits: n, max_qubits });
    }
    let assignment = match mode {
        CutMode::Auto => eda_partition(&connectivity(c), max_qubits, cfg)?,
        CutMode::Manual(a) => {
            if a.len() != n {
                return Err(CutError::ManualInvalid(format!(
                    "assignment has {} entries for {} qubits",
                    a.len(),
                    n
                )));
            }
            let sizes = part_sizes(&a);
            if sizes.len() < 2 {
                return Err(CutError::ManualInvalid("fewer than two subcircuits".into()));
            }
            if let Some(&s) = sizes.iter().find(|&&s| s > max_qubits) {
                return Err(CutError::ManualInvalid(format!(
                    "a subcircuit has {s} qubits, above the budget of {max_qubits}"
                )));
            }
            canonicalize(&a)
        }
    };
    Ok(CutPlan::from_assignment(c, assignment))
}
