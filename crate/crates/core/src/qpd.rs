//! Quasiprobability decomposition of a single interaction term.
//!
//! The channel of `exp(iθ·A1⊗A2)` equals `Σ_i a_i F_i` where the six `F_i`
//! use only local operations:
//!
//! | i | on `q1`                | on `q2`                | coefficient    |
//! |---|------------------------|------------------------|----------------|
//! | 1 | –                      | –                      | `cos²θ`        |
//! | 2 | `A1`                   | `A2`                   | `sin²θ`        |
//! | 3 | measure `A1` (sign)    | `exp(+iπ/4·A2)`        | `sin(2θ)/2`    |
//! | 4 | measure `A1` (sign)    | `exp(−iπ/4·A2)`        | `−sin(2θ)/2`   |
//! | 5 | `exp(+iπ/4·A1)`        | measure `A2` (sign)    | `sin(2θ)/2`    |
//! | 6 | `exp(−iπ/4·A1)`        | measure `A2` (sign)    | `−sin(2θ)/2`   |
//!
//! Measured outcome 0 contributes sign +1 and outcome 1 contributes −1.

use std::f64::consts::FRAC_PI_4;

use thiserror::Error;

use crate::circuit::{CircuitError, Gate, InteractionForm};
use crate::sim::Instruction;

/// Default cap on the number of enumerated combinations (6^8).
pub const DEFAULT_COMBINATION_CAP: u64 = 1_679_616;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpdError {
    #[error(transparent)]
    NotCuttable(#[from] CircuitError),
    #[error("gate qubits {0} and {1} lie in the same subcircuit")]
    SameSubcircuit(usize, usize),
    #[error("{count} combinations exceed the budget of {cap}")]
    CombinationBudgetExceeded { count: u128, cap: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpdCoefficients(pub [f64; 6]);

impl QpdCoefficients {
    /// `Σ |a_i|`
    pub fn one_norm(&self) -> f64 {
        self.0.iter().map(|a| a.abs()).sum()
    }

    pub fn get(&self, variant: u8) -> f64 {
        self.0[variant as usize - 1]
    }
}

/// Values this close to a multiple of 1/256 are snapped onto it, so angles
/// such as π/4 (not representable in binary) give exact coefficients.
fn snap(x: f64) -> f64 {
    let r = (x * 256.0).round() / 256.0;
    if (x - r).abs() <= 4.0 * f64::EPSILON { r } else { x }
}

/// `[cos²θ, sin²θ, ½sin2θ, −½sin2θ, ½sin2θ, −½sin2θ]`
pub fn qpd_coefficients(theta: f64) -> QpdCoefficients {
    let (s2, c2) = (2.0 * theta).sin_cos();
    let a3 = snap(s2 / 2.0);
    QpdCoefficients([snap((1.0 + c2) / 2.0), snap((1.0 - c2) / 2.0), a3, -a3, a3, -a3])
}

/// `Π_j Σ_i |a_i(θ_j)|`; the shot overhead scales with its square.
pub fn sampling_overhead(thetas: &[f64]) -> f64 {
    thetas.iter().map(|&t| qpd_coefficients(t).one_norm()).product()
}

/// One local variant of a cut gate. Instruction lists use the original
/// circuit's qubit indices and already contain the gate's local pre/post
/// gates on their home side.
#[derive(Debug, Clone, PartialEq)]
pub struct Subexperiment {
    /// 1..=6
    pub variant: u8,
    pub coefficient: f64,
    pub side1: Vec<Instruction>,
    pub side2: Vec<Instruction>,
    /// `(subcircuit, record)` of the sign measurement; the record index is
    /// the ordinal of the cut the measurement belongs to.
    pub sign_registers: Vec<(usize, usize)>,
}

/// Builds the six subexperiments of a cut gate whose qubits sit in
/// subcircuits `parts.0` (first qubit) and `parts.1` (second qubit).
pub fn make_subexperiments(gate: &Gate, parts: (usize, usize), cut_index: usize) -> Result<[Subexperiment; 6], QpdError> {
    let form = gate.interaction_form()?;
    if parts.0 == parts.1 {
        return Err(QpdError::SameSubcircuit(form.q1, form.q2));
    }
    Ok(subexperiments_for(&form, parts, cut_index))
}

pub fn subexperiments_for(form: &InteractionForm, parts: (usize, usize), cut_index: usize) -> [Subexperiment; 6] {
    let coeffs = qpd_coefficients(form.theta);
    let (q1, q2) = (form.q1, form.q2);
    let local = |q: usize, mid: Vec<Instruction>| -> Vec<Instruction> {
        let mut v: Vec<Instruction> =
            form.pre.iter().filter(|g| g.qubits()[0] == q).map(|g| Instruction::Gate(*g)).collect();
        v.extend(mid);
        v.extend(form.post.iter().filter(|g| g.qubits()[0] == q).map(|g| Instruction::Gate(*g)));
        v
    };
    let gate = |g: Gate| vec![Instruction::Gate(g)];
    let measure1 = || vec![Instruction::Measure { qubit: q1, basis: form.a1 }];
    let measure2 = || vec![Instruction::Measure { qubit: q2, basis: form.a2 }];
    let build = |variant: u8, mid1: Vec<Instruction>, mid2: Vec<Instruction>| {
        let sign_registers = match variant {
            3 | 4 => vec![(parts.0, cut_index)],
            5 | 6 => vec![(parts.1, cut_index)],
            _ => vec![],
        };
        Subexperiment {
            variant,
            coefficient: coeffs.get(variant),
            side1: local(q1, mid1),
            side2: local(q2, mid2),
            sign_registers,
        }
    };
    [
        build(1, vec![], vec![]),
        build(2, gate(form.a1.gate(q1)), gate(form.a2.gate(q2))),
        build(3, measure1(), gate(form.a2.exp_gate(q2, FRAC_PI_4))),
        build(4, measure1(), gate(form.a2.exp_gate(q2, -FRAC_PI_4))),
        build(5, gate(form.a1.exp_gate(q1, FRAC_PI_4)), measure2()),
        build(6, gate(form.a1.exp_gate(q1, -FRAC_PI_4)), measure2()),
    ]
}

/// Per-cut variant choice and the product of their coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinationIndex {
    pub variants: Vec<u8>,
    pub coefficient: f64,
}

/// `6^k`, or an error if it exceeds `cap`.
pub fn combination_count(k: usize, cap: u64) -> Result<u64, QpdError> {
    let count = 6u128.checked_pow(k as u32).unwrap_or(u128::MAX);
    if count > cap as u128 {
        return Err(QpdError::CombinationBudgetExceeded { count, cap });
    }
    Ok(count as u64)
}

/// Variant tuple at position `index` in odometer order (last cut fastest).
pub fn nth_variants(index: u64, k: usize) -> Vec<u8> {
    let mut v = vec![1u8; k];
    let mut rest = index;
    for slot in v.iter_mut().rev() {
        *slot = (rest % 6) as u8 + 1;
        rest /= 6;
    }
    v
}

/// Iterates all `6^k` combinations of the given cut coefficient sets.
pub fn enumerate_combinations(
    coefficients: &[QpdCoefficients],
    cap: u64,
) -> Result<impl Iterator<Item = CombinationIndex> + '_, QpdError> {
    let count = combination_count(coefficients.len(), cap)?;
    Ok((0..count).map(move |i| {
        let variants = nth_variants(i, coefficients.len());
        let coefficient = variants.iter().zip(coefficients).map(|(&v, c)| c.get(v)).product();
        CombinationIndex { variants, coefficient }
    }))
}
