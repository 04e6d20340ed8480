//! Gate set, circuits with a gate ledger, statevector execution and full-matrix
//! extraction.
//!
//! Rotations follow `R_a(θ) = exp(−iθσ_a/2)`. `PhaseExp { axis, theta }` is the
//! unhalved `exp(+iθσ_axis)` used by the signal-processing constructions.
//! Controlled gates act by index masking: only amplitudes whose control bits match are
//! touched, whatever the number of controls.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is in the graph
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, hadamard, pauli, pauli_exp, Axis, ComplexMatrix, QuantumState, C64, ZERO};
use crate::{Error, Result};

/// Largest register `to_matrix` will materialise.
pub const MAX_MATRIX_QUBITS: usize = 12;

const PAYLOAD_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GateKind {
    H,
    Pauli { axis: Axis },
    Rx { theta: f64 },
    Ry { theta: f64 },
    Rz { theta: f64 },
    /// `exp(+iθσ_axis)`
    PhaseExp { axis: Axis, theta: f64 },
    /// Arbitrary unitary on the listed targets; targets[0] is the most significant.
    Unitary { matrix: ComplexMatrix },
}

impl GateKind {
    pub fn name(&self) -> &'static str {
        match self {
            GateKind::H => "h",
            GateKind::Pauli { axis: Axis::X } => "x",
            GateKind::Pauli { axis: Axis::Y } => "y",
            GateKind::Pauli { axis: Axis::Z } => "z",
            GateKind::Rx { .. } => "rx",
            GateKind::Ry { .. } => "ry",
            GateKind::Rz { .. } => "rz",
            GateKind::PhaseExp { axis: Axis::X, .. } => "exp_x",
            GateKind::PhaseExp { axis: Axis::Y, .. } => "exp_y",
            GateKind::PhaseExp { axis: Axis::Z, .. } => "exp_z",
            GateKind::Unitary { .. } => "unitary",
        }
    }

    fn arity(&self) -> Option<usize> {
        match self {
            GateKind::Unitary { matrix } => {
                let dim = matrix.rows();
                (dim.is_power_of_two() && matrix.is_square()).then(|| dim.trailing_zeros() as usize)
            }
            _ => Some(1),
        }
    }

    /// Matrix on the target space.
    pub fn matrix(&self) -> ComplexMatrix {
        match self {
            GateKind::H => hadamard(),
            GateKind::Pauli { axis } => pauli(*axis),
            GateKind::Rx { theta } => pauli_exp(Axis::X, -theta / 2.0),
            GateKind::Ry { theta } => pauli_exp(Axis::Y, -theta / 2.0),
            GateKind::Rz { theta } => pauli_exp(Axis::Z, -theta / 2.0),
            GateKind::PhaseExp { axis, theta } => pauli_exp(*axis, *theta),
            GateKind::Unitary { matrix } => matrix.clone(),
        }
    }

    /// Row-major 2×2 entries of the fixed one-qubit kinds, without allocating.
    fn entries2(&self) -> Option<[C64; 4]> {
        let exp = |axis: Axis, t: f64| {
            let (s, c) = t.sin_cos();
            let (c, is) = (linalg::c64(c, 0.0), linalg::c64(0.0, s));
            match axis {
                Axis::X => [c, is, is, c],
                Axis::Y => [c, linalg::c64(s, 0.0), linalg::c64(-s, 0.0), c],
                Axis::Z => [c + is, ZERO, ZERO, c - is],
            }
        };
        Some(match self {
            GateKind::Rx { theta } => exp(Axis::X, -theta / 2.0),
            GateKind::Ry { theta } => exp(Axis::Y, -theta / 2.0),
            GateKind::Rz { theta } => exp(Axis::Z, -theta / 2.0),
            GateKind::PhaseExp { axis, theta } => exp(*axis, *theta),
            _ => return None,
        })
    }

    /// Rotation parameter, when the gate is a `exp(−iθσ/2)` rotation.
    pub fn rotation_angle(&self) -> Option<f64> {
        match self {
            GateKind::Rx { theta } | GateKind::Ry { theta } | GateKind::Rz { theta } => Some(*theta),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Control {
    pub qubit: usize,
    /// The gate fires when this qubit reads `1` (true) or `0` (false).
    pub value: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    #[serde(flatten)]
    pub kind: GateKind,
    pub targets: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub controls: Vec<Control>,
    /// Index of the trainable parameter driving this gate, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<usize>,
}

impl Gate {
    pub fn new(kind: GateKind, targets: Vec<usize>, controls: Vec<Control>) -> Result<Self> {
        let gate = Gate { kind, targets, controls, param: None };
        gate.validate()?;
        Ok(gate)
    }

    fn single(kind: GateKind, q: usize) -> Self {
        Gate { kind, targets: vec![q], controls: Vec::new(), param: None }
    }

    pub fn h(q: usize) -> Self {
        Self::single(GateKind::H, q)
    }

    pub fn pauli(axis: Axis, q: usize) -> Self {
        Self::single(GateKind::Pauli { axis }, q)
    }

    pub fn rx(q: usize, theta: f64) -> Self {
        Self::single(GateKind::Rx { theta }, q)
    }

    pub fn ry(q: usize, theta: f64) -> Self {
        Self::single(GateKind::Ry { theta }, q)
    }

    pub fn rz(q: usize, theta: f64) -> Self {
        Self::single(GateKind::Rz { theta }, q)
    }

    pub fn phase_exp(axis: Axis, theta: f64, q: usize) -> Self {
        Self::single(GateKind::PhaseExp { axis, theta }, q)
    }

    /// Controlled-Z between two distinct qubits.
    pub fn cz(a: usize, b: usize) -> Self {
        Gate {
            kind: GateKind::Pauli { axis: Axis::Z },
            targets: vec![b],
            controls: vec![Control { qubit: a, value: true }],
            param: None,
        }
    }

    pub fn unitary(matrix: ComplexMatrix, targets: Vec<usize>) -> Result<Self> {
        Self::new(GateKind::Unitary { matrix }, targets, Vec::new())
    }

    pub fn controlled_by(mut self, qubit: usize, value: bool) -> Self {
        self.controls.push(Control { qubit, value });
        self
    }

    pub fn with_param(mut self, index: usize) -> Self {
        self.param = Some(index);
        self
    }

    /// Ledger key: the kind name, prefixed with `controlled-` when controls exist.
    pub fn label(&self) -> String {
        if self.controls.is_empty() {
            self.kind.name().into()
        } else {
            alloc::format!("controlled-{}", self.kind.name())
        }
    }

    pub fn qubits(&self) -> impl Iterator<Item = usize> + '_ {
        self.targets.iter().copied().chain(self.controls.iter().map(|c| c.qubit))
    }

    fn validate(&self) -> Result<()> {
        let arity = self
            .kind
            .arity()
            .ok_or_else(|| Error::Shape("unitary payload must be square with power-of-two size".into()))?;
        if self.targets.len() != arity || arity == 0 {
            return Err(Error::Shape(alloc::format!(
                "{} acts on {arity} qubits but {} targets were given",
                self.kind.name(),
                self.targets.len()
            )));
        }
        let mut seen: Vec<usize> = self.qubits().collect();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Input("targets and controls must be distinct qubits".into()));
        }
        if let GateKind::Unitary { matrix } = &self.kind {
            let defect = linalg::unitarity_defect(matrix);
            if !(defect < PAYLOAD_TOLERANCE) {
                return Err(Error::Contract(alloc::format!("gate payload has unitarity defect {defect:e}")));
            }
        }
        Ok(())
    }
}

/// Per-kind gate counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateLedger {
    pub counts: BTreeMap<String, usize>,
    pub total: usize,
}

impl GateLedger {
    fn record(&mut self, gate: &Gate) {
        *self.counts.entry(gate.label()).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn count(&self, label: &str) -> usize {
        self.counts.get(label).copied().unwrap_or(0)
    }
}

/// Ordered gate list over a fixed register. Gates run first to last, so the circuit's
/// matrix is `G_last ⋯ G_first`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CircuitRepr")]
pub struct Circuit {
    num_qubits: usize,
    gates: Vec<Gate>,
    ledger: GateLedger,
}

#[derive(Deserialize)]
struct CircuitRepr {
    num_qubits: usize,
    gates: Vec<Gate>,
}

impl TryFrom<CircuitRepr> for Circuit {
    type Error = Error;
    fn try_from(repr: CircuitRepr) -> Result<Self> {
        let mut c = Circuit::new(repr.num_qubits);
        for g in repr.gates {
            g.validate()?;
            c.push(g)?;
        }
        Ok(c)
    }
}

impl Circuit {
    pub fn new(num_qubits: usize) -> Self {
        Circuit { num_qubits, gates: Vec::new(), ledger: GateLedger::default() }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
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

    pub fn push(&mut self, gate: Gate) -> Result<()> {
        if let Some(q) = gate.qubits().find(|&q| q >= self.num_qubits) {
            return Err(Error::Shape(alloc::format!(
                "qubit {q} out of range for a {}-qubit circuit",
                self.num_qubits
            )));
        }
        self.ledger.record(&gate);
        self.gates.push(gate);
        Ok(())
    }

    /// Appends every gate of `other` (same register size).
    pub fn append(&mut self, other: &Circuit) -> Result<()> {
        if other.num_qubits != self.num_qubits {
            return Err(Error::Shape(alloc::format!(
                "cannot append a {}-qubit circuit to a {}-qubit one",
                other.num_qubits,
                self.num_qubits
            )));
        }
        for g in &other.gates {
            self.ledger.record(g);
            self.gates.push(g.clone());
        }
        Ok(())
    }

    pub fn ledger(&self) -> &GateLedger {
        &self.ledger
    }
}

/// Per-kind and total gate counts.
pub fn gate_count(circuit: &Circuit) -> GateLedger {
    circuit.ledger.clone()
}

/// Runs the circuit on `state`.
pub fn apply(circuit: &Circuit, state: &QuantumState) -> Result<QuantumState> {
    if state.num_qubits() != circuit.num_qubits {
        return Err(Error::Shape(alloc::format!(
            "{}-qubit circuit applied to a {}-qubit state",
            circuit.num_qubits,
            state.num_qubits()
        )));
    }
    let mut out = state.clone();
    apply_in_place(circuit, out.amplitudes_mut());
    Ok(out)
}

/// Runs the circuit on a raw amplitude buffer of length `2^num_qubits`.
pub fn apply_in_place(circuit: &Circuit, amplitudes: &mut [C64]) {
    debug_assert_eq!(amplitudes.len(), 1 << circuit.num_qubits);
    for gate in &circuit.gates {
        apply_gate(gate, circuit.num_qubits, amplitudes);
    }
}

fn bit(num_qubits: usize, qubit: usize) -> usize {
    1 << (num_qubits - 1 - qubit)
}

/// Applies one gate by index masking.
pub fn apply_gate(gate: &Gate, num_qubits: usize, amplitudes: &mut [C64]) {
    let (ctrl_mask, ctrl_val) = gate.controls.iter().fold((0usize, 0usize), |(mask, val), c| {
        let b = bit(num_qubits, c.qubit);
        (mask | b, if c.value { val | b } else { val })
    });
    let dim = amplitudes.len();

    if let [t] = gate.targets[..] {
        let tb = bit(num_qubits, t);
        let [m00, m01, m10, m11] = gate.kind.entries2().unwrap_or_else(|| {
            let m = gate.kind.matrix();
            [m.get(0, 0), m.get(0, 1), m.get(1, 0), m.get(1, 1)]
        });
        for i in 0..dim {
            if i & tb != 0 || i & ctrl_mask != ctrl_val {
                continue;
            }
            let j = i | tb;
            let (a0, a1) = (amplitudes[i], amplitudes[j]);
            amplitudes[i] = m00 * a0 + m01 * a1;
            amplitudes[j] = m10 * a0 + m11 * a1;
        }
        return;
    }

    let m = gate.kind.matrix();
    let k = gate.targets.len();
    let sub = 1usize << k;
    let tbits: Vec<usize> = gate.targets.iter().map(|&t| bit(num_qubits, t)).collect();
    let tmask = tbits.iter().fold(0, |a, b| a | b);
    let offsets: Vec<usize> = (0..sub)
        .map(|s| (0..k).filter(|&i| s & (1 << (k - 1 - i)) != 0).fold(0, |acc, i| acc | tbits[i]))
        .collect();
    let mut buf = vec![ZERO; sub];
    for base in 0..dim {
        if base & tmask != 0 || base & ctrl_mask != ctrl_val {
            continue;
        }
        for (s, off) in offsets.iter().enumerate() {
            buf[s] = amplitudes[base | off];
        }
        for (r, off) in offsets.iter().enumerate() {
            amplitudes[base | off] = (0..sub).map(|c| m.get(r, c) * buf[c]).sum();
        }
    }
}

/// Full `2^n × 2^n` matrix of the circuit.
pub fn to_matrix(circuit: &Circuit) -> Result<ComplexMatrix> {
    to_matrix_with_limit(circuit, MAX_MATRIX_QUBITS)
}

pub fn to_matrix_with_limit(circuit: &Circuit, max_qubits: usize) -> Result<ComplexMatrix> {
    if circuit.num_qubits > max_qubits {
        return Err(Error::Size { requested: circuit.num_qubits, limit: max_qubits });
    }
    let dim = 1usize << circuit.num_qubits;
    let mut out = ComplexMatrix::zeros(dim, dim);
    let mut column = vec![ZERO; dim];
    for c in 0..dim {
        column.iter_mut().for_each(|a| *a = ZERO);
        column[c] = linalg::ONE;
        apply_in_place(circuit, &mut column);
        for (r, v) in column.iter().enumerate() {
            out[(r, c)] = *v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c64, kron, matmul, ONE};
    use core::f64::consts::{FRAC_1_SQRT_2, PI};

    #[test]
    fn closed_form_single_qubit_entries() {
        let kinds = [
            GateKind::Rx { theta: 0.7 },
            GateKind::Ry { theta: -1.3 },
            GateKind::Rz { theta: 2.9 },
            GateKind::PhaseExp { axis: Axis::X, theta: 0.4 },
            GateKind::PhaseExp { axis: Axis::Y, theta: -2.2 },
            GateKind::PhaseExp { axis: Axis::Z, theta: 1.1 },
        ];
        for k in kinds {
            let e = k.entries2().unwrap();
            let m = k.matrix();
            for (i, v) in e.iter().enumerate() {
                assert!((v - m.get(i / 2, i % 2)).norm() < 1e-15, "{k:?}");
            }
        }
        assert!(GateKind::H.entries2().is_none());
    }

    #[test]
    fn hadamard_on_zero() {
        let mut c = Circuit::new(1);
        c.push(Gate::h(0)).unwrap();
        let out = apply(&c, &QuantumState::zero(1)).unwrap();
        let h = c64(FRAC_1_SQRT_2, 0.0);
        assert!(out.max_abs_diff(&QuantumState::from_amplitudes(vec![h, h]).unwrap()) < 1e-15);
    }

    #[test]
    fn ry_pi_flips_zero_to_one() {
        let m = GateKind::Ry { theta: PI }.matrix();
        let expected = ComplexMatrix::from_rows(&[&[ZERO, -ONE], &[ONE, ZERO]]).unwrap();
        assert!(m.max_abs_diff(&expected) < 1e-15);
        let mut c = Circuit::new(1);
        c.push(Gate::ry(0, PI)).unwrap();
        let out = apply(&c, &QuantumState::zero(1)).unwrap();
        assert!(out.max_abs_diff(&QuantumState::basis(1, 1)) < 1e-15);
    }

    #[test]
    fn controlled_ry_fires_only_on_matching_control() {
        // control qubit 0 in |1>, target qubit 1 in |0>
        let mut c = Circuit::new(2);
        c.push(Gate::ry(1, 2.0 * 0.0f64.acos()).controlled_by(0, true)).unwrap();
        let out = apply(&c, &QuantumState::basis(2, 0b10)).unwrap();
        assert!((out.amplitudes()[0b11].norm() - 1.0).abs() < 1e-15);
        // control in |0>: untouched
        let out = apply(&c, &QuantumState::basis(2, 0b00)).unwrap();
        assert_eq!(out, QuantumState::basis(2, 0));
    }

    #[test]
    fn to_matrix_small_cases() {
        assert_eq!(to_matrix(&Circuit::new(2)).unwrap(), ComplexMatrix::identity(4));
        let mut c = Circuit::new(1);
        c.push(Gate::h(0)).unwrap();
        assert!(to_matrix(&c).unwrap().max_abs_diff(&hadamard()) < 1e-15);

        let mut c = Circuit::new(2);
        c.push(Gate::rx(0, 0.3)).unwrap();
        c.push(Gate::rz(1, -1.2)).unwrap();
        let expected = kron(&GateKind::Rx { theta: 0.3 }.matrix(), &GateKind::Rz { theta: -1.2 }.matrix()).unwrap();
        assert!(to_matrix(&c).unwrap().max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn to_matrix_respects_order() {
        let mut c = Circuit::new(1);
        c.push(Gate::h(0)).unwrap();
        c.push(Gate::rz(0, 0.5)).unwrap();
        let expected = matmul(&GateKind::Rz { theta: 0.5 }.matrix(), &hadamard()).unwrap();
        assert!(to_matrix(&c).unwrap().max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn size_limit() {
        let c = Circuit::new(13);
        assert!(matches!(to_matrix(&c), Err(Error::Size { requested: 13, limit: 12 })));
    }

    #[test]
    fn validation_errors() {
        let mut c = Circuit::new(2);
        assert!(c.push(Gate::h(2)).is_err());
        assert!(Gate::new(GateKind::H, vec![0], vec![Control { qubit: 0, value: true }]).is_err());
        let bad = ComplexMatrix::identity(2).scale(c64(1.1, 0.0));
        assert!(matches!(Gate::unitary(bad, vec![0]), Err(Error::Contract(_))));
        assert!(Gate::unitary(ComplexMatrix::identity(4), vec![0]).is_err());
        assert!(apply(&c, &QuantumState::zero(3)).is_err());
    }

    #[test]
    fn ledger_counts() {
        let mut c = Circuit::new(3);
        assert_eq!(gate_count(&c).total, 0);
        c.push(Gate::h(0)).unwrap();
        c.push(Gate::h(1)).unwrap();
        c.push(Gate::ry(2, 0.1).controlled_by(0, true).controlled_by(1, false)).unwrap();
        c.push(Gate::cz(0, 1)).unwrap();
        let l = gate_count(&c);
        assert_eq!(l.count("h"), 2);
        assert_eq!(l.count("controlled-ry"), 1);
        assert_eq!(l.count("controlled-z"), 1);
        assert_eq!(l.total, c.len());
    }

    #[test]
    fn multi_target_unitary_matches_kron() {
        let a = GateKind::Ry { theta: 0.7 }.matrix();
        let b = GateKind::Rx { theta: -0.2 }.matrix();
        let ab = kron(&a, &b).unwrap();
        // targets listed in reverse qubit order: matrix acts as (q2, q0)
        let mut c = Circuit::new(3);
        c.push(Gate::unitary(ab, vec![2, 0]).unwrap()).unwrap();
        let mut d = Circuit::new(3);
        d.push(Gate::ry(2, 0.7)).unwrap();
        d.push(Gate::rx(0, -0.2)).unwrap();
        assert!(to_matrix(&c).unwrap().max_abs_diff(&to_matrix(&d).unwrap()) < 1e-15);
    }
}
