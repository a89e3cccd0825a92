//! Dense statevector simulator: circuit execution, Pauli expectations, shot
//! sampling with readout noise, and branching mid-circuit measurements.

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;
use rand::Rng as _;
use thiserror::Error;

use crate::circuit::{Circuit, CircuitError, Gate, GateMatrix, Pauli, PauliObservable, PauliString};
use crate::linalg::{Mat2, Mat4, ZERO};
use crate::rng::Rng;

pub const DEFAULT_QUBIT_CAP: usize = 24;

/// Probabilities below this are treated as impossible outcomes.
const ZERO_PROBABILITY: f64 = 1e-15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("{n_qubits} qubits exceeds the simulator cap of {cap}")]
    QubitCapExceeded { n_qubits: usize, cap: usize },
    #[error("expectation has imaginary residue {0:e}")]
    NonHermitianResidue(f64),
    #[error("asymmetric readout noise is not supported by the analytic channel")]
    AsymmetricNoiseUnsupported,
    #[error("readout probabilities must lie in [0, 1]")]
    InvalidNoise,
    #[error("state vector length {0} is not a power of two")]
    BadLength(usize),
    #[error("state vector norm {0} differs from 1")]
    NotNormalized(f64),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n: usize,
    amps: Vec<C64>,
}

impl StateVector {
    /// `|0…0⟩` on `n` qubits.
    pub fn zero(n: usize) -> Self {
        let mut amps = vec![ZERO; 1 << n];
        amps[0] = C64::new(1.0, 0.0);
        StateVector { n, amps }
    }

    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self, SimError> {
        let len = amps.len();
        if len == 0 || !len.is_power_of_two() {
            return Err(SimError::BadLength(len));
        }
        let s = StateVector { n: len.trailing_zeros() as usize, amps };
        let norm = s.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(SimError::NotNormalized(norm));
        }
        Ok(s)
    }

    pub(crate) fn from_raw(n: usize, amps: Vec<C64>) -> Self {
        debug_assert_eq!(amps.len(), 1 << n);
        StateVector { n, amps }
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `⟨self|other⟩`
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    /// `|⟨self|other⟩|²`
    pub fn fidelity(&self, other: &StateVector) -> f64 {
        self.inner(other).norm_sqr()
    }

    pub fn apply(&mut self, gate: &Gate) {
        let qs = gate.qubits();
        match gate.matrix() {
            GateMatrix::One(u) => self.apply_one(qs[0], &u),
            GateMatrix::Two(u) => self.apply_two(qs[0], qs[1], &u),
        }
    }

    pub(crate) fn apply_one(&mut self, q: usize, u: &Mat2) {
        let bit = 1usize << q;
        for i in 0..self.amps.len() {
            if i & bit != 0 {
                continue;
            }
            let j = i | bit;
            let (a, b) = (self.amps[i], self.amps[j]);
            self.amps[i] = u[0][0] * a + u[0][1] * b;
            self.amps[j] = u[1][0] * a + u[1][1] * b;
        }
    }

    /// `u` is indexed by `2·b(first) + b(second)`.
    pub(crate) fn apply_two(&mut self, first: usize, second: usize, u: &Mat4) {
        let (bf, bs) = (1usize << first, 1usize << second);
        for base in 0..self.amps.len() {
            if base & (bf | bs) != 0 {
                continue;
            }
            let idx = [base, base | bs, base | bf, base | bf | bs];
            let v = idx.map(|i| self.amps[i]);
            for (r, &i) in idx.iter().enumerate() {
                self.amps[i] = u[r][0] * v[0] + u[r][1] * v[1] + u[r][2] * v[2] + u[r][3] * v[3];
            }
        }
    }

    /// `⟨ψ|P|ψ⟩` as a complex number.
    pub fn pauli_expectation(&self, p: &PauliString) -> C64 {
        let (x, z, ny) = p.masks();
        let phase = match ny % 4 {
            0 => C64::new(1.0, 0.0),
            1 => C64::new(0.0, 1.0),
            2 => C64::new(-1.0, 0.0),
            _ => C64::new(0.0, -1.0),
        };
        // P|b⟩ = i^{ny} (-1)^{|b ∧ z|} |b ⊕ x⟩
        let mut acc = ZERO;
        for (b, amp) in self.amps.iter().enumerate() {
            let term = self.amps[b ^ x].conj() * amp;
            if (b & z).count_ones() % 2 == 1 {
                acc -= term;
            } else {
                acc += term;
            }
        }
        acc * phase
    }

    /// Rotates each listed qubit so that its Pauli becomes Z.
    pub(crate) fn rotate_to_z(&mut self, p: &PauliString) {
        for (q, pauli) in p.iter() {
            for g in basis_rotation(q, pauli) {
                self.apply(&g);
            }
        }
    }
}

/// Gates mapping the eigenbasis of `basis` onto the computational basis.
pub fn basis_rotation(q: usize, basis: Pauli) -> Vec<Gate> {
    match basis {
        Pauli::Z => vec![],
        Pauli::X => vec![Gate::H(q)],
        Pauli::Y => vec![Gate::Sdg(q), Gate::H(q)],
    }
}

fn basis_unrotation(q: usize, basis: Pauli) -> Vec<Gate> {
    match basis {
        Pauli::Z => vec![],
        Pauli::X => vec![Gate::H(q)],
        Pauli::Y => vec![Gate::H(q), Gate::S(q)],
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Simulator {
    pub qubit_cap: usize,
}

impl Default for Simulator {
    fn default() -> Self {
        Simulator { qubit_cap: DEFAULT_QUBIT_CAP }
    }
}

impl Simulator {
    pub fn with_cap(qubit_cap: usize) -> Self {
        Simulator { qubit_cap }
    }

    fn check(&self, n: usize) -> Result<(), SimError> {
        if n > self.qubit_cap {
            return Err(SimError::QubitCapExceeded { n_qubits: n, cap: self.qubit_cap });
        }
        Ok(())
    }

    /// Applies every gate of `c` to `|0…0⟩`.
    pub fn run(&self, c: &Circuit) -> Result<StateVector, SimError> {
        self.check(c.n_qubits())?;
        let mut s = StateVector::zero(c.n_qubits());
        for g in c.gates() {
            s.apply(g);
        }
        Ok(s)
    }

    /// Executes a program with mid-circuit measurements, keeping every
    /// measurement branch. Impossible branches are dropped.
    pub fn run_branches(&self, n: usize, program: &[Instruction]) -> Result<Vec<Branch>, SimError> {
        self.check(n)?;
        let mut branches = vec![Branch {
            probability: 1.0,
            sign: 1.0,
            state: StateVector::zero(n),
            outcomes: Vec::new(),
            used: true,
        }];
        for ins in program {
            match ins {
                Instruction::Gate(g) => {
                    for b in branches.iter_mut() {
                        b.state.apply(g);
                    }
                }
                Instruction::Measure { qubit, basis } => {
                    let mut next = Vec::with_capacity(branches.len() * 2);
                    for b in branches {
                        for child in branch_measure(&b.state, *qubit, *basis) {
                            if !child.used {
                                continue;
                            }
                            let mut outcomes = b.outcomes.clone();
                            outcomes.extend(child.outcomes);
                            next.push(Branch {
                                probability: b.probability * child.probability,
                                sign: b.sign * child.sign,
                                state: child.state,
                                outcomes,
                                used: true,
                            });
                        }
                    }
                    branches = next;
                }
            }
        }
        Ok(branches)
    }
}

/// Step of a subexperiment program.
#[derive(Debug, Clone, PartialEq)]
pub enum Instruction {
    Gate(Gate),
    /// Projective measurement of `basis` on `qubit`; outcome 0 ↦ sign +1.
    Measure { qubit: usize, basis: Pauli },
}

/// One outcome of a projective measurement (or a chain of them).
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub probability: f64,
    /// Product of ±1 signs of the recorded outcomes.
    pub sign: f64,
    pub state: StateVector,
    /// Raw outcome bits in measurement order.
    pub outcomes: Vec<bool>,
    /// False for zero-probability placeholders.
    pub used: bool,
}

/// Projects `state` onto both eigenspaces of `basis` on `qubit`.
///
/// The measured qubit is rotated into Z, projected, and rotated back, so the
/// post-measurement states are the normalized `(I ± P)/2 |ψ⟩`.
pub fn branch_measure(state: &StateVector, qubit: usize, basis: Pauli) -> [Branch; 2] {
    let mut rotated = state.clone();
    for g in basis_rotation(qubit, basis) {
        rotated.apply(&g);
    }
    let bit = 1usize << qubit;
    let p1: f64 = rotated
        .amps
        .iter()
        .enumerate()
        .filter(|(i, _)| i & bit != 0)
        .map(|(_, a)| a.norm_sqr())
        .sum();
    let total = rotated.amps.iter().map(|a| a.norm_sqr()).sum::<f64>();
    let p0 = (total - p1).max(0.0);
    let make = |outcome: bool, p: f64| -> Branch {
        if p < ZERO_PROBABILITY {
            return Branch {
                probability: 0.0,
                sign: if outcome { -1.0 } else { 1.0 },
                state: state.clone(),
                outcomes: vec![outcome],
                used: false,
            };
        }
        let scale = 1.0 / p.sqrt();
        let amps = rotated
            .amps
            .iter()
            .enumerate()
            .map(|(i, a)| if ((i & bit) != 0) == outcome { a * scale } else { ZERO })
            .collect();
        let mut s = StateVector::from_raw(rotated.n, amps);
        for g in basis_unrotation(qubit, basis) {
            s.apply(&g);
        }
        Branch {
            probability: p,
            sign: if outcome { -1.0 } else { 1.0 },
            state: s,
            outcomes: vec![outcome],
            used: true,
        }
    };
    [make(false, p0), make(true, p1)]
}

/// `Σ_k c_k ⟨ψ|P_k|ψ⟩`.
pub fn expectation(state: &StateVector, obs: &PauliObservable) -> Result<f64, SimError> {
    obs.check_range(state.n_qubits())?;
    let mut acc = ZERO;
    for t in obs.terms() {
        acc += state.pauli_expectation(&t.pauli) * t.coeff;
    }
    if acc.im.abs() > 1e-8 {
        return Err(SimError::NonHermitianResidue(acc.im));
    }
    Ok(acc.re)
}

/// Per-qubit classical readout confusion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadoutNoise {
    /// P(read 0 | prepared 1)
    pub p01: f64,
    /// P(read 1 | prepared 0)
    pub p10: f64,
}

impl ReadoutNoise {
    pub fn new(p01: f64, p10: f64) -> Result<Self, SimError> {
        let ok = |p: f64| (0.0..=1.0).contains(&p);
        if !ok(p01) || !ok(p10) {
            return Err(SimError::InvalidNoise);
        }
        Ok(ReadoutNoise { p01, p10 })
    }

    pub fn symmetric(eps: f64) -> Result<Self, SimError> {
        Self::new(eps, eps)
    }

    /// Applies the confusion channel to one measured bit.
    pub fn corrupt(&self, bit: bool, rng: &mut Rng) -> bool {
        let flip = if bit { self.p01 } else { self.p10 };
        if flip > 0.0 && rng.random::<f64>() < flip {
            !bit
        } else {
            bit
        }
    }

    /// Multiplicative attenuation `(1 − 2ε)^k` of a `k`-bit parity.
    pub fn parity_attenuation(&self, k: usize) -> Result<f64, SimError> {
        if self.p01 != self.p10 {
            return Err(SimError::AsymmetricNoiseUnsupported);
        }
        Ok((1.0 - 2.0 * self.p01).powi(k as i32))
    }
}

/// Analytic effect of symmetric readout noise on the expectation of one
/// Pauli term measured in the Z basis after rotation.
pub fn apply_readout_to_expectation(e: f64, term: &PauliString, noise: &ReadoutNoise) -> Result<f64, SimError> {
    Ok(e * noise.parity_attenuation(term.weight())?)
}

/// Formats a basis index with qubit `n-1` leftmost.
pub fn bitstring(index: usize, n: usize) -> String {
    (0..n).rev().map(|q| if index >> q & 1 == 1 { '1' } else { '0' }).collect()
}

fn cumulative(probs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    probs
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect()
}

fn draw(cdf: &[f64], rng: &mut Rng) -> usize {
    let total = *cdf.last().expect("non-empty distribution");
    let u = rng.random::<f64>() * total;
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

fn corrupt_index(mut idx: usize, n: usize, noise: Option<&ReadoutNoise>, rng: &mut Rng) -> usize {
    if let Some(nz) = noise {
        for q in 0..n {
            let bit = idx >> q & 1 == 1;
            if nz.corrupt(bit, rng) != bit {
                idx ^= 1 << q;
            }
        }
    }
    idx
}

/// Measures every qubit `shots` times; counts keyed by basis index.
pub fn sample_indices(
    state: &StateVector,
    shots: u64,
    noise: Option<&ReadoutNoise>,
    rng: &mut Rng,
) -> BTreeMap<usize, u64> {
    let cdf = cumulative(&state.probabilities());
    let mut counts = BTreeMap::new();
    for _ in 0..shots {
        let idx = corrupt_index(draw(&cdf, rng), state.n, noise, rng);
        *counts.entry(idx).or_insert(0) += 1;
    }
    counts
}

/// Measures every qubit `shots` times; counts keyed by bitstring.
pub fn sample(
    state: &StateVector,
    shots: u64,
    noise: Option<&ReadoutNoise>,
    rng: &mut Rng,
) -> BTreeMap<String, u64> {
    sample_indices(state, shots, noise, rng)
        .into_iter()
        .map(|(i, c)| (bitstring(i, state.n), c))
        .collect()
}

/// Partitions Pauli strings into qubit-wise commuting groups; each group is
/// measured with one basis setting. Returns `(setting, member indices)`.
pub fn group_qubitwise(strings: &[PauliString]) -> Vec<(PauliString, Vec<usize>)> {
    let mut groups: Vec<(BTreeMap<usize, Pauli>, Vec<usize>)> = Vec::new();
    for (k, s) in strings.iter().enumerate() {
        if s.is_identity() {
            continue;
        }
        let slot = groups.iter_mut().find(|(setting, _)| {
            s.iter().all(|(q, p)| setting.get(&q).is_none_or(|&sp| sp == p))
        });
        match slot {
            Some((setting, members)) => {
                setting.extend(s.iter());
                members.push(k);
            }
            None => groups.push((s.iter().collect(), vec![k])),
        }
    }
    groups.into_iter().map(|(s, m)| (PauliString::from_pairs(s), m)).collect()
}

/// Shot estimates of `E[sign · P]` for each string over a branch ensemble.
///
/// Each group setting receives `shots` shots. A shot picks a branch with its
/// probability, reads the sign bits and the rotated register, and passes every
/// measured bit through the readout channel.
pub fn estimate_signed(
    branches: &[Branch],
    strings: &[PauliString],
    shots: u64,
    noise: Option<&ReadoutNoise>,
    rng: &mut Rng,
) -> Vec<f64> {
    let mut out = vec![0.0; strings.len()];
    let sign_only: f64 = branches.iter().map(|b| b.probability * b.sign).sum();
    let branch_cdf = cumulative(&branches.iter().map(|b| b.probability).collect::<Vec<_>>());
    let shots = shots.max(1);
    for (k, s) in strings.iter().enumerate() {
        if s.is_identity() {
            // only the sign bits are read
            let mut acc = 0i64;
            for _ in 0..shots {
                let b = &branches[draw(&branch_cdf, rng)];
                acc += noisy_sign(b, noise, rng);
            }
            out[k] = if branches.iter().all(|b| b.outcomes.is_empty()) {
                sign_only
            } else {
                acc as f64 / shots as f64
            };
        }
    }
    for (setting, members) in group_qubitwise(strings) {
        let cdfs: Vec<Vec<f64>> = branches
            .iter()
            .map(|b| {
                let mut s = b.state.clone();
                s.rotate_to_z(&setting);
                cumulative(&s.probabilities())
            })
            .collect();
        let masks: Vec<usize> = members
            .iter()
            .map(|&k| strings[k].iter().fold(0usize, |m, (q, _)| m | 1 << q))
            .collect();
        let mut acc = vec![0i64; members.len()];
        for _ in 0..shots {
            let bi = draw(&branch_cdf, rng);
            let sign = noisy_sign(&branches[bi], noise, rng);
            let n = branches[bi].state.n;
            let idx = corrupt_index(draw(&cdfs[bi], rng), n, noise, rng);
            for (a, m) in acc.iter_mut().zip(&masks) {
                let parity = if (idx & m).count_ones().is_multiple_of(2) { 1 } else { -1 };
                *a += sign * parity;
            }
        }
        for (&k, a) in members.iter().zip(acc) {
            out[k] = a as f64 / shots as f64;
        }
    }
    out
}

fn noisy_sign(b: &Branch, noise: Option<&ReadoutNoise>, rng: &mut Rng) -> i64 {
    let mut sign = 1i64;
    for &bit in &b.outcomes {
        let read = match noise {
            Some(nz) => nz.corrupt(bit, rng),
            None => bit,
        };
        if read {
            sign = -sign;
        }
    }
    sign
}
