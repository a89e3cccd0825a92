//! Executes cut circuits as independent subcircuit experiments and
//! recombines them into full-circuit expectation values (or states).
//!
//! For a combination of variants the subcircuits evolve independently from
//! `|0…0⟩`, so the signed operator of the whole register is the tensor product
//! of per-subcircuit signed operators `σ_s = Σ_b p_b·β_b·|ψ_b⟩⟨ψ_b|`. A Pauli
//! term `⊗_s P_s` therefore factorizes into `Π_s tr(P_s σ_s)`.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{Circuit, CircuitError, PauliObservable, PauliString};
use crate::cutfinder::{CutError, CutPlan};
use crate::qpd::{self, QpdCoefficients, QpdError, Subexperiment, DEFAULT_COMBINATION_CAP};
use crate::rng;
use crate::sim::{self, Branch, Instruction, ReadoutNoise, SimError, Simulator, StateVector, DEFAULT_QUBIT_CAP};

/// Largest register accepted by [`reconstruct_statevector`].
pub const STATE_REBUILD_MAX_QUBITS: usize = 12;

/// Lower bound on shots spent per subcircuit experiment.
pub const MIN_SHOTS_PER_EXPERIMENT: u64 = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReconstructError {
    #[error(transparent)]
    Qpd(#[from] QpdError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Cut(#[from] CutError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error("{0} qubits is too many to rebuild the state (max {STATE_REBUILD_MAX_QUBITS})")]
    TooLargeForStateRebuild(usize),
    #[error("reconstructed operator is mixed: dominant eigenvalue {0}")]
    MixedStateDetected(f64),
    #[error("state reconstruction requires exact mode")]
    ExactModeRequired,
}

impl ReconstructError {
    /// Budget and cap violations, as opposed to malformed input.
    pub fn is_resource_limit(&self) -> bool {
        matches!(
            self,
            ReconstructError::Qpd(QpdError::CombinationBudgetExceeded { .. })
                | ReconstructError::Sim(SimError::QubitCapExceeded { .. })
                | ReconstructError::TooLargeForStateRebuild(_)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExecutionMode {
    Exact,
    Shots { shots: u64, seed: u64 },
}

impl ExecutionMode {
    pub fn label(&self) -> &'static str {
        match self {
            ExecutionMode::Exact => "exact",
            ExecutionMode::Shots { .. } => "shots",
        }
    }
}

/// Where and how subcircuit experiments run.
#[derive(Clone)]
pub struct ExecutionBackend {
    pub mode: ExecutionMode,
    pub noise: Option<ReadoutNoise>,
    pub qubit_cap: usize,
    pub combination_cap: u64,
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl std::fmt::Debug for ExecutionBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExecutionBackend")
            .field("mode", &self.mode)
            .field("noise", &self.noise)
            .field("qubit_cap", &self.qubit_cap)
            .field("combination_cap", &self.combination_cap)
            .field("workers", &self.pool.as_ref().map(|p| p.current_num_threads()))
            .finish()
    }
}

impl Default for ExecutionBackend {
    fn default() -> Self {
        Self::exact()
    }
}

impl ExecutionBackend {
    pub fn exact() -> Self {
        ExecutionBackend {
            mode: ExecutionMode::Exact,
            noise: None,
            qubit_cap: DEFAULT_QUBIT_CAP,
            combination_cap: DEFAULT_COMBINATION_CAP,
            pool: None,
        }
    }

    pub fn shots(shots: u64, seed: u64) -> Self {
        ExecutionBackend { mode: ExecutionMode::Shots { shots, seed }, ..Self::exact() }
    }

    pub fn with_noise(mut self, noise: Option<ReadoutNoise>) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_qubit_cap(mut self, cap: usize) -> Self {
        self.qubit_cap = cap;
        self
    }

    pub fn with_combination_cap(mut self, cap: u64) -> Self {
        self.combination_cap = cap;
        self
    }

    /// Runs parallel work on a dedicated pool of `workers` threads.
    pub fn with_workers(mut self, workers: usize) -> Self {
        self.pool = Some(Arc::new(
            rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build().expect("thread pool"),
        ));
        self
    }

    /// Same backend with the shot seed replaced by a child of the current one.
    pub fn reseeded(&self, salt: u64) -> Self {
        let mut b = self.clone();
        if let ExecutionMode::Shots { shots, seed } = b.mode {
            b.mode = ExecutionMode::Shots { shots, seed: rng::mix(seed, salt) };
        }
        b
    }

    fn simulator(&self) -> Simulator {
        Simulator::with_cap(self.qubit_cap)
    }

    fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        match &self.pool {
            Some(p) => p.install(f),
            None => f(),
        }
    }
}

/// Runs `f` over all tasks in parallel. Results keep task order; the first
/// failing task (by position) determines the error.
pub fn execute_parallel<T, R, E, F>(tasks: &[T], backend: &ExecutionBackend, f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(usize, &T) -> Result<R, E> + Sync + Send,
{
    let results: Vec<Result<R, E>> =
        backend.install(|| tasks.par_iter().enumerate().map(|(i, t)| f(i, t)).collect());
    results.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitTerm {
    pub coeff: f64,
    /// One factor per subcircuit, on that subcircuit's local qubit indices.
    pub factors: Vec<PauliString>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitObservable {
    /// Sorted global qubits of each subcircuit.
    pub parts: Vec<Vec<usize>>,
    pub terms: Vec<SplitTerm>,
}

impl SplitObservable {
    /// Reassembles the original observable.
    pub fn merge(&self) -> PauliObservable {
        let mut o = PauliObservable::new();
        for t in &self.terms {
            let pairs = t
                .factors
                .iter()
                .zip(&self.parts)
                .flat_map(|(f, qs)| f.iter().map(move |(lq, p)| (qs[lq], p)));
            o.add_term(t.coeff, PauliString::from_pairs(pairs)).expect("finite coefficient");
        }
        o
    }
}

fn split_by_parts(obs: &PauliObservable, assignment: &[usize], n_parts: usize) -> SplitObservable {
    let mut parts = vec![Vec::new(); n_parts];
    let mut local = vec![0usize; assignment.len()];
    for (q, &p) in assignment.iter().enumerate() {
        local[q] = parts[p].len();
        parts[p].push(q);
    }
    let terms = obs
        .terms()
        .iter()
        .map(|t| SplitTerm {
            coeff: t.coeff,
            factors: (0..n_parts).map(|s| t.pauli.restrict(|q| assignment[q] == s, |q| local[q])).collect(),
        })
        .collect();
    SplitObservable { parts, terms }
}

/// Qubit-wise factorization of each term across the plan's subcircuits.
pub fn split_observable(obs: &PauliObservable, plan: &CutPlan) -> Result<SplitObservable, ReconstructError> {
    obs.check_range(plan.assignment.len())?;
    Ok(split_by_parts(obs, &plan.assignment, plan.n_parts()))
}

/// Circuit broken into subcircuits with the subexperiments of every cut.
#[derive(Debug, Clone)]
struct Fragments {
    assignment: Vec<usize>,
    parts: Vec<Vec<usize>>,
    /// Global → local qubit index within its part.
    local: Vec<usize>,
    /// Per gate: `None` for a local gate, `Some(j)` for the `j`-th cut.
    routing: Vec<Option<usize>>,
    gates: Vec<crate::circuit::Gate>,
    cuts: Vec<[Subexperiment; 6]>,
    thetas: Vec<f64>,
    /// Cuts touching each part, in cut order.
    incident: Vec<Vec<usize>>,
}

impl Fragments {
    fn new(c: &Circuit, assignment: &[usize]) -> Result<Self, ReconstructError> {
        let n_parts = assignment.iter().max().map_or(0, |m| m + 1);
        let mut parts = vec![Vec::new(); n_parts];
        let mut local = vec![0usize; assignment.len()];
        for (q, &p) in assignment.iter().enumerate() {
            local[q] = parts[p].len();
            parts[p].push(q);
        }
        let mut routing = Vec::with_capacity(c.len());
        let mut cuts = Vec::new();
        let mut thetas = Vec::new();
        let mut incident = vec![Vec::new(); n_parts];
        for g in c.gates() {
            let qs = g.qubits();
            if qs.len() == 2 && assignment[qs[0]] != assignment[qs[1]] {
                let j = cuts.len();
                let (p1, p2) = (assignment[qs[0]], assignment[qs[1]]);
                let form = g.interaction_form()?;
                thetas.push(form.theta);
                cuts.push(qpd::subexperiments_for(&form, (p1, p2), j));
                incident[p1].push(j);
                incident[p2].push(j);
                routing.push(Some(j));
            } else {
                routing.push(None);
            }
        }
        Ok(Fragments {
            assignment: assignment.to_vec(),
            parts,
            local,
            routing,
            gates: c.gates().to_vec(),
            cuts,
            thetas,
            incident,
        })
    }

    fn n_parts(&self) -> usize {
        self.parts.len()
    }

    fn coefficients(&self) -> Vec<QpdCoefficients> {
        self.thetas.iter().map(|&t| qpd::qpd_coefficients(t)).collect()
    }

    fn remap(&self, ins: &Instruction) -> Instruction {
        match ins {
            Instruction::Gate(g) => Instruction::Gate(g.remap(|q| self.local[q])),
            Instruction::Measure { qubit, basis } => Instruction::Measure { qubit: self.local[*qubit], basis: *basis },
        }
    }

    /// Program of part `s` when its incident cuts use `variants` (1..=6).
    fn program(&self, s: usize, variants: &[u8]) -> Vec<Instruction> {
        let mut prog = Vec::new();
        for (g, route) in self.gates.iter().zip(&self.routing) {
            match route {
                None => {
                    if self.assignment[g.qubits()[0]] == s {
                        prog.push(Instruction::Gate(g.remap(|q| self.local[q])));
                    }
                }
                Some(j) => {
                    let Some(pos) = self.incident[s].iter().position(|x| x == j) else { continue };
                    let sub = &self.cuts[*j][variants[pos] as usize - 1];
                    let qs = g.qubits();
                    let side = if self.assignment[qs[0]] == s { &sub.side1 } else { &sub.side2 };
                    prog.extend(side.iter().map(|i| self.remap(i)));
                }
            }
        }
        prog
    }

    /// Tasks of part `s`: one per variant tuple of its incident cuts.
    fn tasks_of(&self, s: usize) -> u64 {
        6u64.pow(self.incident[s].len() as u32)
    }

    /// Task index (within part `s`) selected by a global combination.
    fn task_index(&self, s: usize, combo: &[u8]) -> u64 {
        self.incident[s].iter().fold(0u64, |acc, &j| acc * 6 + (combo[j] - 1) as u64)
    }
}

#[derive(Debug, Clone, Copy)]
struct Task {
    part: usize,
    index: u64,
}

fn all_tasks(fr: &Fragments) -> (Vec<Task>, Vec<usize>) {
    let mut tasks = Vec::new();
    let mut offsets = Vec::with_capacity(fr.n_parts());
    for s in 0..fr.n_parts() {
        offsets.push(tasks.len());
        for index in 0..fr.tasks_of(s) {
            tasks.push(Task { part: s, index });
        }
    }
    (tasks, offsets)
}

fn task_branches(fr: &Fragments, task: &Task, sim: &Simulator) -> Result<(Vec<Branch>, usize), SimError> {
    let k = fr.incident[task.part].len();
    let variants = qpd::nth_variants(task.index, k);
    let prog = fr.program(task.part, &variants);
    let measurements = prog.iter().filter(|i| matches!(i, Instruction::Measure { .. })).count();
    Ok((sim.run_branches(fr.parts[task.part].len(), &prog)?, measurements))
}

/// Outcome of a reconstruction run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub expectation: f64,
    pub combinations: u64,
    pub gamma: f64,
    pub mode: String,
}

impl Reconstruction {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("result serializes")
    }
}

fn evaluate(fr: &Fragments, obs: &PauliObservable, backend: &ExecutionBackend) -> Result<Reconstruction, ReconstructError> {
    let coeffs = fr.coefficients();
    let n_combos = qpd::combination_count(coeffs.len(), backend.combination_cap)?;
    let sim = backend.simulator();
    for p in &fr.parts {
        if p.len() > backend.qubit_cap {
            return Err(SimError::QubitCapExceeded { n_qubits: p.len(), cap: backend.qubit_cap }.into());
        }
    }
    let split = split_by_parts(obs, &fr.assignment, fr.n_parts());
    let (tasks, offsets) = all_tasks(fr);
    let noise = backend.noise;
    let per_task_shots = match backend.mode {
        ExecutionMode::Exact => 0,
        ExecutionMode::Shots { shots, .. } => (shots / n_combos).max(MIN_SHOTS_PER_EXPERIMENT),
    };

    let values: Vec<Vec<f64>> = execute_parallel(&tasks, backend, |i, task| -> Result<Vec<f64>, ReconstructError> {
        let (branches, measurements) = task_branches(fr, task, &sim)?;
        let factors: Vec<PauliString> = split.terms.iter().map(|t| t.factors[task.part].clone()).collect();
        match backend.mode {
            ExecutionMode::Exact => factors
                .iter()
                .map(|f| {
                    let mut v = 0.0;
                    for b in &branches {
                        v += b.probability * b.sign * b.state.pauli_expectation(f).re;
                    }
                    match &noise {
                        Some(nz) => Ok(v * nz.parity_attenuation(measurements + f.weight())?),
                        None => Ok(v),
                    }
                })
                .collect(),
            ExecutionMode::Shots { seed, .. } => {
                let mut r = rng::stream(seed, i as u64);
                Ok(sim::estimate_signed(&branches, &factors, per_task_shots, noise.as_ref(), &mut r))
            }
        }
    })?;

    let mut total = 0.0;
    for combo in qpd::enumerate_combinations(&coeffs, backend.combination_cap)? {
        if combo.coefficient == 0.0 {
            continue;
        }
        let rows: Vec<&Vec<f64>> = (0..fr.n_parts())
            .map(|s| &values[offsets[s] + fr.task_index(s, &combo.variants) as usize])
            .collect();
        let mut acc = 0.0;
        for (t, term) in split.terms.iter().enumerate() {
            acc += term.coeff * rows.iter().map(|r| r[t]).product::<f64>();
        }
        total += combo.coefficient * acc;
    }
    Ok(Reconstruction {
        expectation: total,
        combinations: n_combos,
        gamma: qpd::sampling_overhead(&fr.thetas),
        mode: backend.mode.label().to_string(),
    })
}

/// Full-circuit expectation of `obs` rebuilt from the subexperiments of `plan`.
pub fn reconstruct_expectation(
    c: &Circuit,
    obs: &PauliObservable,
    plan: &CutPlan,
    backend: &ExecutionBackend,
) -> Result<Reconstruction, ReconstructError> {
    plan.check(c)?;
    obs.check_range(c.n_qubits())?;
    evaluate(&Fragments::new(c, &plan.assignment)?, obs, backend)
}

/// Expectation of the whole circuit run as a single register.
pub fn uncut_expectation(
    c: &Circuit,
    obs: &PauliObservable,
    backend: &ExecutionBackend,
) -> Result<Reconstruction, ReconstructError> {
    obs.check_range(c.n_qubits())?;
    evaluate(&Fragments::new(c, &vec![0; c.n_qubits()])?, obs, backend)
}

/// Uncut when `plan` is `None`, reconstructed otherwise.
pub fn expectation_with(
    c: &Circuit,
    obs: &PauliObservable,
    plan: Option<&CutPlan>,
    backend: &ExecutionBackend,
) -> Result<Reconstruction, ReconstructError> {
    match plan {
        Some(p) => reconstruct_expectation(c, obs, p, backend),
        None => uncut_expectation(c, obs, backend),
    }
}

/// Rebuilds the output state from subexperiment branch states.
///
/// The signed density operator `ρ = Σ_combo Π a · ⊗_s σ_s` is applied
/// implicitly; its dominant eigenvector (power iteration) is returned with the
/// largest amplitude made real and positive.
pub fn reconstruct_statevector(
    c: &Circuit,
    plan: &CutPlan,
    backend: &ExecutionBackend,
) -> Result<StateVector, ReconstructError> {
    let n = c.n_qubits();
    if n > STATE_REBUILD_MAX_QUBITS {
        return Err(ReconstructError::TooLargeForStateRebuild(n));
    }
    if !matches!(backend.mode, ExecutionMode::Exact) {
        return Err(ReconstructError::ExactModeRequired);
    }
    plan.check(c)?;
    let fr = Fragments::new(c, &plan.assignment)?;
    let coeffs = fr.coefficients();
    qpd::combination_count(coeffs.len(), backend.combination_cap)?;
    let sim = backend.simulator();
    let (tasks, offsets) = all_tasks(&fr);
    let branch_sets: Vec<Vec<Branch>> =
        execute_parallel(&tasks, backend, |_, t| task_branches(&fr, t, &sim).map(|(b, _)| b))?;

    // local index of each global basis state within each part
    let dim = 1usize << n;
    let local_index: Vec<Vec<usize>> = (0..fr.n_parts())
        .map(|s| {
            (0..dim)
                .map(|x| fr.parts[s].iter().enumerate().fold(0, |acc, (lq, &gq)| acc | ((x >> gq & 1) << lq)))
                .collect()
        })
        .collect();

    // rank-one terms w·|Φ⟩⟨Φ| of ρ
    let mut terms: Vec<(f64, Vec<C64>)> = Vec::new();
    for combo in qpd::enumerate_combinations(&coeffs, backend.combination_cap)? {
        if combo.coefficient == 0.0 {
            continue;
        }
        let sets: Vec<&Vec<Branch>> = (0..fr.n_parts())
            .map(|s| &branch_sets[offsets[s] + fr.task_index(s, &combo.variants) as usize])
            .collect();
        let mut pick = vec![0usize; sets.len()];
        'outer: loop {
            let mut w = combo.coefficient;
            for (set, &b) in sets.iter().zip(&pick) {
                w *= set[b].probability * set[b].sign;
            }
            if w != 0.0 {
                let phi: Vec<C64> = (0..dim)
                    .map(|x| {
                        sets.iter().zip(&pick).enumerate().fold(C64::new(1.0, 0.0), |acc, (s, (set, &b))| {
                            acc * set[b].state.amplitudes()[local_index[s][x]]
                        })
                    })
                    .collect();
                terms.push((w, phi));
            }
            for s in (0..sets.len()).rev() {
                pick[s] += 1;
                if pick[s] < sets[s].len() {
                    continue 'outer;
                }
                pick[s] = 0;
            }
            break;
        }
    }

    let apply = |v: &[C64]| -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); dim];
        for (w, phi) in &terms {
            let overlap: C64 = phi.iter().zip(v).map(|(a, b)| a.conj() * b).sum::<C64>() * *w;
            for (o, a) in out.iter_mut().zip(phi) {
                *o += a * overlap;
            }
        }
        out
    };
    let normalize = |v: &mut Vec<C64>| {
        let nrm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if nrm > 0.0 {
            v.iter_mut().for_each(|a| *a /= nrm);
        }
    };

    let mut r = rng::stream(0x5eed, 0);
    let mut v: Vec<C64> = (0..dim)
        .map(|_| {
            use rand::Rng as _;
            C64::new(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5)
        })
        .collect();
    normalize(&mut v);
    for _ in 0..200 {
        let mut next = apply(&v);
        normalize(&mut next);
        let overlap: C64 = v.iter().zip(&next).map(|(a, b)| a.conj() * b).sum();
        v = next;
        if 1.0 - overlap.norm() < 1e-15 {
            break;
        }
    }
    let rv = apply(&v);
    let lambda: f64 = v.iter().zip(&rv).map(|(a, b)| a.conj() * b).sum::<C64>().re;
    if lambda < 1.0 - 1e-6 {
        return Err(ReconstructError::MixedStateDetected(lambda));
    }
    let pivot = v
        .iter()
        .copied()
        .max_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap_or(C64::new(1.0, 0.0));
    let phase = pivot.conj() / pivot.norm();
    let amps: Vec<C64> = v.iter().map(|a| a * phase).collect();
    Ok(StateVector::from_amplitudes(amps)?)
}
