//! Circuit intermediate representation: gates, circuits, Pauli observables and
//! the matrix semantics every other module builds on.
//!
//! Conventions:
//! - In a state vector, qubit 0 is the least-significant bit of the basis index.
//! - A two-qubit gate matrix is written in the local basis `2·b(first) + b(second)`,
//!   i.e. `A ⊗ B` applies `A` to the first listed qubit and `B` to the second.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_4;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, Mat2, Mat4, I, ONE, ZERO};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error("qubit {qubit} out of range for a {n_qubits}-qubit circuit")]
    QubitOutOfRange { qubit: usize, n_qubits: usize },
    #[error("two-qubit gate acts twice on qubit {0}")]
    DuplicateQubit(usize),
    #[error("circuit must have at least one qubit")]
    NoQubits,
    #[error("gate is not cuttable: {0}")]
    NotCuttable(String),
    #[error("unknown gate kind `{0}`")]
    UnknownGate(String),
    #[error("gate `{kind}` expects {expected} qubit(s), got {got}")]
    Arity { kind: String, expected: usize, got: usize },
    #[error("gate `{0}` requires a `theta` field")]
    MissingTheta(String),
    #[error("invalid Pauli label `{0}`")]
    BadPauli(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// Single-qubit Pauli operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];

    pub fn matrix(self) -> Mat2 {
        match self {
            Pauli::X => [[ZERO, ONE], [ONE, ZERO]],
            Pauli::Y => [[ZERO, -I], [I, ZERO]],
            Pauli::Z => [[ONE, ZERO], [ZERO, -ONE]],
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    pub fn from_char(c: char) -> Option<Pauli> {
        match c.to_ascii_uppercase() {
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    /// Gate applying the Pauli itself.
    pub fn gate(self, q: usize) -> Gate {
        match self {
            Pauli::X => Gate::X(q),
            Pauli::Y => Gate::Y(q),
            Pauli::Z => Gate::Z(q),
        }
    }

    /// Gate implementing `exp(i·angle·P)` exactly (no global phase).
    pub fn exp_gate(self, q: usize, angle: f64) -> Gate {
        // R_P(t) = exp(-i t P / 2)
        match self {
            Pauli::X => Gate::Rx(q, -2.0 * angle),
            Pauli::Y => Gate::Ry(q, -2.0 * angle),
            Pauli::Z => Gate::Rz(q, -2.0 * angle),
        }
    }
}

/// A gate of the supported set. Angles are radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    H(usize),
    X(usize),
    Y(usize),
    Z(usize),
    S(usize),
    Sdg(usize),
    Rx(usize, f64),
    Ry(usize, f64),
    Rz(usize, f64),
    Phase(usize, f64),
    CX { control: usize, target: usize },
    CRZ { theta: f64, control: usize, target: usize },
    /// `exp(i·theta·A1⊗A2)` with `a1` on `q1` and `a2` on `q2`.
    Interaction { theta: f64, a1: Pauli, a2: Pauli, q1: usize, q2: usize },
}

/// Unitary of a gate in its local basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateMatrix {
    One(Mat2),
    Two(Mat4),
}

impl Gate {
    pub fn name(&self) -> &'static str {
        match self {
            Gate::H(_) => "H",
            Gate::X(_) => "X",
            Gate::Y(_) => "Y",
            Gate::Z(_) => "Z",
            Gate::S(_) => "S",
            Gate::Sdg(_) => "Sdg",
            Gate::Rx(..) => "Rx",
            Gate::Ry(..) => "Ry",
            Gate::Rz(..) => "Rz",
            Gate::Phase(..) => "Phase",
            Gate::CX { .. } => "CX",
            Gate::CRZ { .. } => "CRZ",
            Gate::Interaction { .. } => "Interaction",
        }
    }

    pub fn qubits(&self) -> Vec<usize> {
        match *self {
            Gate::H(q)
            | Gate::X(q)
            | Gate::Y(q)
            | Gate::Z(q)
            | Gate::S(q)
            | Gate::Sdg(q)
            | Gate::Rx(q, _)
            | Gate::Ry(q, _)
            | Gate::Rz(q, _)
            | Gate::Phase(q, _) => vec![q],
            Gate::CX { control, target } | Gate::CRZ { control, target, .. } => {
                vec![control, target]
            }
            Gate::Interaction { q1, q2, .. } => vec![q1, q2],
        }
    }

    pub fn theta(&self) -> Option<f64> {
        match *self {
            Gate::Rx(_, t) | Gate::Ry(_, t) | Gate::Rz(_, t) | Gate::Phase(_, t) => Some(t),
            Gate::CRZ { theta, .. } | Gate::Interaction { theta, .. } => Some(theta),
            _ => None,
        }
    }

    pub fn is_two_qubit(&self) -> bool {
        matches!(self, Gate::CX { .. } | Gate::CRZ { .. } | Gate::Interaction { .. })
    }

    /// Returns the same gate acting on remapped qubits.
    pub fn remap(&self, f: impl Fn(usize) -> usize) -> Gate {
        match *self {
            Gate::H(q) => Gate::H(f(q)),
            Gate::X(q) => Gate::X(f(q)),
            Gate::Y(q) => Gate::Y(f(q)),
            Gate::Z(q) => Gate::Z(f(q)),
            Gate::S(q) => Gate::S(f(q)),
            Gate::Sdg(q) => Gate::Sdg(f(q)),
            Gate::Rx(q, t) => Gate::Rx(f(q), t),
            Gate::Ry(q, t) => Gate::Ry(f(q), t),
            Gate::Rz(q, t) => Gate::Rz(f(q), t),
            Gate::Phase(q, t) => Gate::Phase(f(q), t),
            Gate::CX { control, target } => Gate::CX { control: f(control), target: f(target) },
            Gate::CRZ { theta, control, target } => {
                Gate::CRZ { theta, control: f(control), target: f(target) }
            }
            Gate::Interaction { theta, a1, a2, q1, q2 } => {
                Gate::Interaction { theta, a1, a2, q1: f(q1), q2: f(q2) }
            }
        }
    }

    fn validate(&self, n_qubits: usize) -> Result<(), CircuitError> {
        let qs = self.qubits();
        for &q in &qs {
            if q >= n_qubits {
                return Err(CircuitError::QubitOutOfRange { qubit: q, n_qubits });
            }
        }
        if qs.len() == 2 && qs[0] == qs[1] {
            return Err(CircuitError::DuplicateQubit(qs[0]));
        }
        if let Some(t) = self.theta() {
            if !t.is_finite() {
                return Err(CircuitError::NonFinite("gate angle"));
            }
        }
        Ok(())
    }

    /// Unitary matrix in the computational basis.
    pub fn matrix(&self) -> GateMatrix {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match *self {
            Gate::H(_) => GateMatrix::One([
                [C64::new(h, 0.0), C64::new(h, 0.0)],
                [C64::new(h, 0.0), C64::new(-h, 0.0)],
            ]),
            Gate::X(_) => GateMatrix::One(Pauli::X.matrix()),
            Gate::Y(_) => GateMatrix::One(Pauli::Y.matrix()),
            Gate::Z(_) => GateMatrix::One(Pauli::Z.matrix()),
            Gate::S(_) => GateMatrix::One([[ONE, ZERO], [ZERO, I]]),
            Gate::Sdg(_) => GateMatrix::One([[ONE, ZERO], [ZERO, -I]]),
            Gate::Rx(_, t) => {
                let (c, s) = ((t / 2.0).cos(), (t / 2.0).sin());
                GateMatrix::One([
                    [C64::new(c, 0.0), C64::new(0.0, -s)],
                    [C64::new(0.0, -s), C64::new(c, 0.0)],
                ])
            }
            Gate::Ry(_, t) => {
                let (c, s) = ((t / 2.0).cos(), (t / 2.0).sin());
                GateMatrix::One([
                    [C64::new(c, 0.0), C64::new(-s, 0.0)],
                    [C64::new(s, 0.0), C64::new(c, 0.0)],
                ])
            }
            Gate::Rz(_, t) => GateMatrix::One([
                [C64::from_polar(1.0, -t / 2.0), ZERO],
                [ZERO, C64::from_polar(1.0, t / 2.0)],
            ]),
            Gate::Phase(_, t) => GateMatrix::One([[ONE, ZERO], [ZERO, C64::from_polar(1.0, t)]]),
            Gate::CX { .. } => {
                let mut m = [[ZERO; 4]; 4];
                m[0][0] = ONE;
                m[1][1] = ONE;
                m[2][3] = ONE;
                m[3][2] = ONE;
                GateMatrix::Two(m)
            }
            Gate::CRZ { theta, .. } => {
                let mut m = [[ZERO; 4]; 4];
                m[0][0] = ONE;
                m[1][1] = ONE;
                m[2][2] = C64::from_polar(1.0, -theta / 2.0);
                m[3][3] = C64::from_polar(1.0, theta / 2.0);
                GateMatrix::Two(m)
            }
            Gate::Interaction { theta, a1, a2, .. } => {
                let pp = linalg::kron(&a1.matrix(), &a2.matrix());
                let mut m = linalg::scale4(&pp, C64::new(0.0, theta.sin()));
                for (k, row) in m.iter_mut().enumerate() {
                    row[k] += C64::new(theta.cos(), 0.0);
                }
                GateMatrix::Two(m)
            }
        }
    }

    /// Splits a two-qubit gate into local gates around a single interaction term.
    pub fn interaction_form(&self) -> Result<InteractionForm, CircuitError> {
        match *self {
            // CX = e^{-iπ/4} [S ⊗ HSH] e^{iπ/4 Y⊗I} e^{iπ/4 X⊗X} e^{-iπ/4 Y⊗I}
            Gate::CX { control, target } => Ok(InteractionForm {
                theta: FRAC_PI_4,
                a1: Pauli::X,
                a2: Pauli::X,
                q1: control,
                q2: target,
                pre: vec![Pauli::Y.exp_gate(control, -FRAC_PI_4)],
                post: vec![
                    Pauli::Y.exp_gate(control, FRAC_PI_4),
                    Gate::S(control),
                    Gate::H(target),
                    Gate::S(target),
                    Gate::H(target),
                ],
                global_phase: -FRAC_PI_4,
            }),
            // CRZ(θ) = Rz_target(θ/2) · e^{iθ/4 Z⊗Z}
            Gate::CRZ { theta, control, target } => Ok(InteractionForm {
                theta: theta / 4.0,
                a1: Pauli::Z,
                a2: Pauli::Z,
                q1: control,
                q2: target,
                pre: Vec::new(),
                post: vec![Gate::Rz(target, theta / 2.0)],
                global_phase: 0.0,
            }),
            Gate::Interaction { theta, a1, a2, q1, q2 } => Ok(InteractionForm {
                theta,
                a1,
                a2,
                q1,
                q2,
                pre: Vec::new(),
                post: Vec::new(),
                global_phase: 0.0,
            }),
            other => Err(CircuitError::NotCuttable(format!(
                "{} is not a two-qubit gate",
                other.name()
            ))),
        }
    }
}

/// `gate = e^{i·global_phase} · post · exp(i·theta·A1⊗A2) · pre`, where `pre`
/// and `post` hold single-qubit gates on `q1`/`q2` listed in execution order.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionForm {
    pub theta: f64,
    pub a1: Pauli,
    pub a2: Pauli,
    pub q1: usize,
    pub q2: usize,
    pub pre: Vec<Gate>,
    pub post: Vec<Gate>,
    pub global_phase: f64,
}

impl InteractionForm {
    pub fn interaction(&self) -> Gate {
        Gate::Interaction { theta: self.theta, a1: self.a1, a2: self.a2, q1: self.q1, q2: self.q2 }
    }

    /// Reassembles the 4×4 matrix in the `(q1, q2)` local basis.
    pub fn matrix(&self) -> Mat4 {
        let lift = |g: &Gate| -> Mat4 {
            let GateMatrix::One(u) = g.matrix() else {
                unreachable!("local gates are single-qubit")
            };
            if g.qubits()[0] == self.q1 {
                linalg::kron(&u, &linalg::identity2())
            } else {
                linalg::kron(&linalg::identity2(), &u)
            }
        };
        let GateMatrix::Two(core) = self.interaction().matrix() else { unreachable!() };
        let mut m = linalg::identity4();
        for g in &self.pre {
            m = linalg::mul4(&lift(g), &m);
        }
        m = linalg::mul4(&core, &m);
        for g in &self.post {
            m = linalg::mul4(&lift(g), &m);
        }
        linalg::scale4(&m, C64::from_polar(1.0, self.global_phase))
    }
}

/// An ordered gate list over `n_qubits` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    n_qubits: usize,
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Result<Self, CircuitError> {
        if n_qubits == 0 {
            return Err(CircuitError::NoQubits);
        }
        Ok(Circuit { n_qubits, gates: Vec::new() })
    }

    pub fn from_gates(n_qubits: usize, gates: Vec<Gate>) -> Result<Self, CircuitError> {
        let mut c = Circuit::new(n_qubits)?;
        for g in gates {
            c.push(g)?;
        }
        Ok(c)
    }

    pub fn push(&mut self, gate: Gate) -> Result<&mut Self, CircuitError> {
        gate.validate(self.n_qubits)?;
        self.gates.push(gate);
        Ok(self)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    /// Positions of all two-qubit gates.
    pub fn two_qubit_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.gates.iter().enumerate().filter(|(_, g)| g.is_two_qubit()).map(|(i, _)| i)
    }

    pub fn from_json(s: &str) -> Result<Self, CircuitJsonError> {
        let raw: RawCircuit = serde_json::from_str(s)?;
        Ok(Circuit::try_from(raw)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&RawCircuit::from(self)).expect("circuit serializes")
    }
}

#[derive(Debug, Error)]
pub enum CircuitJsonError {
    #[error("malformed circuit JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}

#[derive(Debug, Serialize, Deserialize)]
struct RawCircuit {
    n_qubits: usize,
    gates: Vec<RawGate>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawGate {
    kind: String,
    qubits: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    theta: Option<f64>,
    /// Two-letter Pauli pair for `Interaction` gates, e.g. `"XZ"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    paulis: Option<String>,
}

impl TryFrom<RawGate> for Gate {
    type Error = CircuitError;

    fn try_from(raw: RawGate) -> Result<Self, Self::Error> {
        let kind = raw.kind.as_str();
        let arity = match kind {
            "CX" | "CNOT" | "CRZ" | "Interaction" => 2,
            _ => 1,
        };
        if raw.qubits.len() != arity {
            return Err(CircuitError::Arity {
                kind: raw.kind.clone(),
                expected: arity,
                got: raw.qubits.len(),
            });
        }
        let q = raw.qubits[0];
        let theta = || raw.theta.ok_or_else(|| CircuitError::MissingTheta(raw.kind.clone()));
        let gate = match kind {
            "H" => Gate::H(q),
            "X" => Gate::X(q),
            "Y" => Gate::Y(q),
            "Z" => Gate::Z(q),
            "S" => Gate::S(q),
            "Sdg" => Gate::Sdg(q),
            "Rx" => Gate::Rx(q, theta()?),
            "Ry" => Gate::Ry(q, theta()?),
            "Rz" => Gate::Rz(q, theta()?),
            "Phase" => Gate::Phase(q, theta()?),
            "CX" | "CNOT" => Gate::CX { control: q, target: raw.qubits[1] },
            "CRZ" => Gate::CRZ { theta: theta()?, control: q, target: raw.qubits[1] },
            "Interaction" => {
                let label = raw.paulis.clone().unwrap_or_default();
                let ps: Vec<Pauli> = label.chars().filter_map(Pauli::from_char).collect();
                if ps.len() != 2 || label.chars().count() != 2 {
                    return Err(CircuitError::BadPauli(label));
                }
                Gate::Interaction { theta: theta()?, a1: ps[0], a2: ps[1], q1: q, q2: raw.qubits[1] }
            }
            _ => return Err(CircuitError::UnknownGate(raw.kind)),
        };
        Ok(gate)
    }
}

impl From<&Gate> for RawGate {
    fn from(g: &Gate) -> Self {
        let paulis = match g {
            Gate::Interaction { a1, a2, .. } => Some(format!("{}{}", a1.as_char(), a2.as_char())),
            _ => None,
        };
        RawGate { kind: g.name().to_string(), qubits: g.qubits(), theta: g.theta(), paulis }
    }
}

impl TryFrom<RawCircuit> for Circuit {
    type Error = CircuitError;

    fn try_from(raw: RawCircuit) -> Result<Self, Self::Error> {
        let gates = raw.gates.into_iter().map(Gate::try_from).collect::<Result<Vec<_>, _>>()?;
        Circuit::from_gates(raw.n_qubits, gates)
    }
}

impl From<&Circuit> for RawCircuit {
    fn from(c: &Circuit) -> Self {
        RawCircuit { n_qubits: c.n_qubits, gates: c.gates.iter().map(RawGate::from).collect() }
    }
}

/// Tensor product of Paulis on listed qubits; identity elsewhere.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliString(BTreeMap<usize, Pauli>);

impl PauliString {
    pub fn identity() -> Self {
        PauliString(BTreeMap::new())
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, Pauli)>) -> Self {
        PauliString(pairs.into_iter().collect())
    }

    pub fn get(&self, q: usize) -> Option<Pauli> {
        self.0.get(&q).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, Pauli)> + '_ {
        self.0.iter().map(|(&q, &p)| (q, p))
    }

    /// Number of non-identity factors.
    pub fn weight(&self) -> usize {
        self.0.len()
    }

    pub fn is_identity(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_qubit(&self) -> Option<usize> {
        self.0.keys().next_back().copied()
    }

    /// Restriction to qubits accepted by `keep`, relabelled through `map`.
    pub fn restrict(&self, keep: impl Fn(usize) -> bool, map: impl Fn(usize) -> usize) -> Self {
        PauliString(self.iter().filter(|(q, _)| keep(*q)).map(|(q, p)| (map(q), p)).collect())
    }

    /// Bit masks `(x, z)` with Y contributing to both, plus the number of Ys.
    pub fn masks(&self) -> (usize, usize, usize) {
        let (mut x, mut z, mut ny) = (0usize, 0usize, 0usize);
        for (q, p) in self.iter() {
            match p {
                Pauli::X => x |= 1 << q,
                Pauli::Z => z |= 1 << q,
                Pauli::Y => {
                    x |= 1 << q;
                    z |= 1 << q;
                    ny += 1;
                }
            }
        }
        (x, z, ny)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "I");
        }
        let parts: Vec<String> = self.iter().map(|(q, p)| format!("{}{}", p.as_char(), q)).collect();
        write!(f, "{}", parts.join(" "))
    }
}

impl FromStr for PauliString {
    type Err = CircuitError;

    /// Parses labels like `"Z0 Z2"`, `"X1"` or `"I"` / `""` for identity.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut map = BTreeMap::new();
        for tok in s.split_whitespace() {
            if tok == "I" {
                continue;
            }
            let mut chars = tok.chars();
            let p = chars
                .next()
                .and_then(Pauli::from_char)
                .ok_or_else(|| CircuitError::BadPauli(tok.to_string()))?;
            let q: usize =
                chars.as_str().parse().map_err(|_| CircuitError::BadPauli(tok.to_string()))?;
            if map.insert(q, p).is_some() {
                return Err(CircuitError::BadPauli(tok.to_string()));
            }
        }
        Ok(PauliString(map))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PauliTerm {
    pub coeff: f64,
    pub pauli: PauliString,
}

/// Real-weighted sum of Pauli strings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PauliObservable {
    terms: Vec<PauliTerm>,
}

impl PauliObservable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_terms(terms: Vec<PauliTerm>) -> Result<Self, CircuitError> {
        let mut o = Self::new();
        for t in terms {
            o.add_term(t.coeff, t.pauli)?;
        }
        Ok(o)
    }

    pub fn add_term(&mut self, coeff: f64, pauli: PauliString) -> Result<&mut Self, CircuitError> {
        if !coeff.is_finite() {
            return Err(CircuitError::NonFinite("observable coefficient"));
        }
        self.terms.push(PauliTerm { coeff, pauli });
        Ok(self)
    }

    pub fn terms(&self) -> &[PauliTerm] {
        &self.terms
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn max_qubit(&self) -> Option<usize> {
        self.terms.iter().filter_map(|t| t.pauli.max_qubit()).max()
    }

    pub fn check_range(&self, n_qubits: usize) -> Result<(), CircuitError> {
        match self.max_qubit() {
            Some(q) if q >= n_qubits => Err(CircuitError::QubitOutOfRange { qubit: q, n_qubits }),
            _ => Ok(()),
        }
    }

    /// `alpha·self + other`, keeping term order.
    pub fn scaled_sum(&self, alpha: f64, other: &PauliObservable) -> PauliObservable {
        let mut terms: Vec<PauliTerm> = self
            .terms
            .iter()
            .map(|t| PauliTerm { coeff: alpha * t.coeff, pauli: t.pauli.clone() })
            .collect();
        terms.extend(other.terms.iter().cloned());
        PauliObservable { terms }
    }

    pub fn from_json(s: &str) -> Result<Self, CircuitJsonError> {
        let raw: RawObservable = serde_json::from_str(s)?;
        let mut o = PauliObservable::new();
        for t in raw.terms {
            o.add_term(t.coeff, t.pauli.parse()?)?;
        }
        Ok(o)
    }

    pub fn to_json(&self) -> String {
        let raw = RawObservable {
            terms: self
                .terms
                .iter()
                .map(|t| RawTerm { coeff: t.coeff, pauli: t.pauli.to_string() })
                .collect(),
        };
        serde_json::to_string(&raw).expect("observable serializes")
    }
}

#[derive(Serialize, Deserialize)]
struct RawObservable {
    terms: Vec<RawTerm>,
}

#[derive(Serialize, Deserialize)]
struct RawTerm {
    coeff: f64,
    pauli: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn two(g: &Gate) -> Mat4 {
        match g.matrix() {
            GateMatrix::Two(m) => m,
            GateMatrix::One(_) => panic!("expected two-qubit gate"),
        }
    }

    fn one(g: &Gate) -> Mat2 {
        match g.matrix() {
            GateMatrix::One(m) => m,
            GateMatrix::Two(_) => panic!("expected one-qubit gate"),
        }
    }

    fn all_gates(t: f64) -> Vec<Gate> {
        let mut v = vec![
            Gate::H(0),
            Gate::X(0),
            Gate::Y(0),
            Gate::Z(0),
            Gate::S(0),
            Gate::Sdg(0),
            Gate::Rx(0, t),
            Gate::Ry(0, t),
            Gate::Rz(0, t),
            Gate::Phase(0, t),
            Gate::CX { control: 0, target: 1 },
            Gate::CRZ { theta: t, control: 0, target: 1 },
        ];
        for a1 in Pauli::ALL {
            for a2 in Pauli::ALL {
                v.push(Gate::Interaction { theta: t, a1, a2, q1: 0, q2: 1 });
            }
        }
        v
    }

    #[test]
    fn every_gate_is_unitary_on_angle_grid() {
        for k in 0..32 {
            let t = 2.0 * PI * k as f64 / 32.0;
            for g in all_gates(t) {
                let err = match g.matrix() {
                    GateMatrix::One(u) => linalg::max_abs_diff2(
                        &linalg::mul2(&u, &linalg::dagger2(&u)),
                        &linalg::identity2(),
                    ),
                    GateMatrix::Two(u) => linalg::max_abs_diff4(
                        &linalg::mul4(&u, &linalg::dagger4(&u)),
                        &linalg::identity4(),
                    ),
                };
                assert!(err < 1e-12, "{g:?} not unitary: {err}");
            }
        }
    }

    #[test]
    fn interaction_at_zero_is_identity() {
        let g = Gate::Interaction { theta: 0.0, a1: Pauli::X, a2: Pauli::X, q1: 0, q2: 1 };
        assert!(linalg::max_abs_diff4(&two(&g), &linalg::identity4()) == 0.0);
    }

    #[test]
    fn cx_matches_exponential_decomposition() {
        // e^{-iπ/4}[S ⊗ HSH] · e^{iπ/4 Y⊗I} · e^{iπ/4 X⊗X} · e^{-iπ/4 Y⊗I}
        let id = linalg::identity2();
        let h = one(&Gate::H(0));
        let s = one(&Gate::S(0));
        let hsh = linalg::mul2(&h, &linalg::mul2(&s, &h));
        let y = Pauli::Y.matrix();
        let exp_y = |sign: f64| -> Mat4 {
            // e^{i·sign·π/4·Y} = cos(π/4) I + i·sign·sin(π/4) Y
            let c = FRAC_PI_4.cos();
            let mut m = [[ZERO; 2]; 2];
            for r in 0..2 {
                for col in 0..2 {
                    m[r][col] = id[r][col] * c + y[r][col] * C64::new(0.0, sign * FRAC_PI_4.sin());
                }
            }
            linalg::kron(&m, &id)
        };
        let xx = two(&Gate::Interaction { theta: FRAC_PI_4, a1: Pauli::X, a2: Pauli::X, q1: 0, q2: 1 });
        let mut m = linalg::kron(&s, &hsh);
        m = linalg::mul4(&m, &exp_y(1.0));
        m = linalg::mul4(&m, &xx);
        m = linalg::mul4(&m, &exp_y(-1.0));
        let m = linalg::scale4(&m, C64::from_polar(1.0, -FRAC_PI_4));
        let cx = two(&Gate::CX { control: 0, target: 1 });
        assert!(linalg::max_abs_diff4(&m, &cx) < 1e-12);
    }

    #[test]
    fn cx_expanded_form_uses_half_prefactor() {
        // (I ± iY)/√2 = e^{±iπ/4 Y}; the two 1/√2 factors combine to 1/2.
        let id = linalg::identity2();
        let y = Pauli::Y.matrix();
        let h = one(&Gate::H(0));
        let s = one(&Gate::S(0));
        let hsh = linalg::mul2(&h, &linalg::mul2(&s, &h));
        let lin = |sign: f64| -> Mat4 {
            let mut m = [[ZERO; 2]; 2];
            for r in 0..2 {
                for col in 0..2 {
                    m[r][col] = id[r][col] + y[r][col] * C64::new(0.0, sign);
                }
            }
            linalg::kron(&m, &id)
        };
        let xx = two(&Gate::Interaction { theta: FRAC_PI_4, a1: Pauli::X, a2: Pauli::X, q1: 0, q2: 1 });
        let mut m = linalg::kron(&s, &hsh);
        m = linalg::mul4(&m, &lin(1.0));
        m = linalg::mul4(&m, &xx);
        m = linalg::mul4(&m, &lin(-1.0));
        let m = linalg::scale4(&m, C64::from_polar(0.5, -FRAC_PI_4));
        let cx = two(&Gate::CX { control: 0, target: 1 });
        assert!(linalg::max_abs_diff4(&m, &cx) < 1e-12);
    }

    #[test]
    fn crz_is_target_phase_times_zz_interaction() {
        for t in [PI / 3.0, PI / 2.0, 1.0] {
            // brute-force product: (I ⊗ Rz(θ/2)) · exp(iθ/4 Z⊗Z)
            let rz = linalg::kron(&linalg::identity2(), &one(&Gate::Rz(0, t / 2.0)));
            let zz = two(&Gate::Interaction { theta: t / 4.0, a1: Pauli::Z, a2: Pauli::Z, q1: 0, q2: 1 });
            let prod = linalg::mul4(&rz, &zz);
            let crz = two(&Gate::CRZ { theta: t, control: 0, target: 1 });
            assert!(linalg::max_abs_diff4(&prod, &crz) < 1e-12, "theta={t}");
        }
    }

    #[test]
    fn interaction_form_reassembles_exactly() {
        let cx = Gate::CX { control: 3, target: 1 };
        let f = cx.interaction_form().unwrap();
        assert_eq!((f.theta, f.a1, f.a2), (FRAC_PI_4, Pauli::X, Pauli::X));
        assert!(linalg::max_abs_diff4(&f.matrix(), &two(&cx)) < 1e-12);

        for t in [PI / 3.0, PI / 2.0, 1.0, -0.4] {
            let g = Gate::CRZ { theta: t, control: 0, target: 2 };
            let f = g.interaction_form().unwrap();
            assert_eq!((f.a1, f.a2), (Pauli::Z, Pauli::Z));
            assert!((f.theta - t / 4.0).abs() < 1e-15);
            assert!(linalg::max_abs_diff4(&f.matrix(), &two(&g)) < 1e-12);
        }

        let g = Gate::Interaction { theta: 0.3, a1: Pauli::Y, a2: Pauli::Y, q1: 0, q2: 1 };
        let f = g.interaction_form().unwrap();
        assert_eq!((f.theta, f.a1, f.a2), (0.3, Pauli::Y, Pauli::Y));
        assert!(f.pre.is_empty() && f.post.is_empty() && f.global_phase == 0.0);
    }

    #[test]
    fn single_qubit_gate_is_not_cuttable() {
        assert!(matches!(Gate::H(0).interaction_form(), Err(CircuitError::NotCuttable(_))));
    }

    #[test]
    fn circuit_rejects_bad_qubits() {
        let mut c = Circuit::new(2).unwrap();
        assert!(c.push(Gate::CX { control: 0, target: 2 }).is_err());
        assert_eq!(
            c.push(Gate::CX { control: 1, target: 1 }).unwrap_err(),
            CircuitError::DuplicateQubit(1)
        );
        assert!(Circuit::new(0).is_err());
    }

    #[test]
    fn json_round_trip_and_field_names() {
        let json = r#"{"n_qubits":3,"gates":[{"kind":"H","qubits":[0]},
            {"kind":"CRZ","qubits":[0,2],"theta":0.5},
            {"kind":"Interaction","qubits":[1,2],"theta":0.3,"paulis":"XY"}]}"#;
        let c = Circuit::from_json(json).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.gates()[2], Gate::Interaction { theta: 0.3, a1: Pauli::X, a2: Pauli::Y, q1: 1, q2: 2 });
        assert_eq!(Circuit::from_json(&c.to_json()).unwrap(), c);
        assert!(Circuit::from_json(r#"{"n_qubits":1,"gates":[{"kind":"Rx","qubits":[0]}]}"#).is_err());
        assert!(Circuit::from_json(r#"{"n_qubits":1,"gates":[{"kind":"Foo","qubits":[0]}]}"#).is_err());
    }

    #[test]
    fn pauli_string_parse_and_display() {
        let p: PauliString = "Z0 X2 Y5".parse().unwrap();
        assert_eq!(p.weight(), 3);
        assert_eq!(p.to_string(), "Z0 X2 Y5");
        assert!("I".parse::<PauliString>().unwrap().is_identity());
        assert!("Q3".parse::<PauliString>().is_err());
        assert!("Z0 X0".parse::<PauliString>().is_err());
        let (x, z, ny) = p.masks();
        assert_eq!((x, z, ny), (0b100100, 0b100001, 1));
    }

    #[test]
    fn observable_json_round_trip() {
        let o = PauliObservable::from_json(r#"{"terms":[{"coeff":0.5,"pauli":"Z0 Z1"},{"coeff":-0.5,"pauli":"I"}]}"#)
            .unwrap();
        assert_eq!(o.terms().len(), 2);
        assert_eq!(PauliObservable::from_json(&o.to_json()).unwrap(), o);
        assert!(o.check_range(2).is_ok());
        assert!(o.check_range(1).is_err());
    }
}
