//! The two-variable discrimination task, its six-query signal-processing circuit and the
//! block-encoding identity that lets the fusion state preparation serve as the oracle.
//!
//! Class 0 is `{θ₁, θ₂} = {0, ±π/2}` taken modulo π (eight points on the torus); class 1 is
//! the curve `4cos²θ₁cos²θ₂ = 1`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, PI};

#[allow(unused_imports)] // shadowed by inherent methods when std is in the graph
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{max_abs_error, train_cp_mse, CpGranularity, CpModel};
use crate::gates::{to_matrix, Circuit, Gate};
use crate::linalg::{self, c64, hadamard, kron, pauli_exp, Axis, ComplexMatrix, C64, I, ONE, ZERO};
use crate::rng;
use crate::{Error, Result};

const CLASS_TOLERANCE: f64 = 1e-12;
/// Probability slack for "exactly 0" and "exactly 1".
pub const ZERO_ERROR_TOLERANCE: f64 = 1e-9;
pub const BLOCK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceClass {
    Zero,
    One,
    OutsidePromise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationInstance {
    pub theta1: f64,
    pub theta2: f64,
    pub class: InstanceClass,
}

impl SeparationInstance {
    pub fn new(theta1: f64, theta2: f64) -> Self {
        Self { theta1, theta2, class: classify(theta1, theta2) }
    }
}

/// Distance from `a` to the nearest multiple of π.
fn off_multiple_of_pi(a: f64) -> f64 {
    let r = a % PI;
    let r = if r < 0.0 { r + PI } else { r };
    r.min(PI - r)
}

pub fn classify(theta1: f64, theta2: f64) -> InstanceClass {
    let zero = |a: f64| off_multiple_of_pi(a) <= CLASS_TOLERANCE;
    let quarter = |a: f64| off_multiple_of_pi(a - FRAC_PI_2) <= CLASS_TOLERANCE;
    if (zero(theta1) && quarter(theta2)) || (quarter(theta1) && zero(theta2)) {
        return InstanceClass::Zero;
    }
    let (c1, c2) = (theta1.cos(), theta2.cos());
    if (4.0 * c1 * c1 * c2 * c2 - 1.0).abs() <= CLASS_TOLERANCE {
        InstanceClass::One
    } else {
        InstanceClass::OutsidePromise
    }
}

/// The eight class-0 points with angles in `(-π, π]`.
pub fn class0_points() -> Vec<SeparationInstance> {
    let mut out = Vec::with_capacity(8);
    for zero in [0.0, PI] {
        for quarter in [FRAC_PI_2, -FRAC_PI_2] {
            out.push(SeparationInstance::new(zero, quarter));
            out.push(SeparationInstance::new(quarter, zero));
        }
    }
    out
}

/// `count` points on the class-1 curve: `θ₁` evenly spaced on `[-π/3, π/3]` and
/// `θ₂ = arccos(1/(2cos θ₁))`.
pub fn class1_points(count: usize) -> Vec<SeparationInstance> {
    (0..count)
        .map(|k| {
            let t1 = if count == 1 { 0.0 } else { -FRAC_PI_3 + 2.0 * FRAC_PI_3 * k as f64 / (count - 1) as f64 };
            let t2 = (1.0 / (2.0 * t1.cos())).clamp(-1.0, 1.0).acos();
            SeparationInstance::new(t1, t2)
        })
        .collect()
}

/// `φ_j = (−1)^j π/4` for `j = 0..=6`.
pub fn qsp_phases() -> [f64; 7] {
    core::array::from_fn(|j| if j % 2 == 0 { FRAC_PI_4 } else { -FRAC_PI_4 })
}

/// `e^{iφ₀σ_z} Π_{k=0}^{2} e^{iθ₁σ_x} e^{iφ_{2k+1}σ_z} e^{iθ₂σ_x} e^{iφ_{2k+2}σ_z}` as a
/// one-qubit circuit. `θ₁` factors carry parameter tag 0 and `θ₂` factors tag 1.
pub fn build_separation_circuit(theta1: f64, theta2: f64) -> Circuit {
    let phi = qsp_phases();
    let mut c = Circuit::new(1);
    let mut push = |g: Gate| c.push(g).expect("single-qubit gate");
    // the written product's rightmost factor acts first
    for k in (0..3).rev() {
        push(Gate::phase_exp(Axis::Z, phi[2 * k + 2], 0));
        push(Gate::phase_exp(Axis::X, theta2, 0).with_param(1));
        push(Gate::phase_exp(Axis::Z, phi[2 * k + 1], 0));
        push(Gate::phase_exp(Axis::X, theta1, 0).with_param(0));
    }
    push(Gate::phase_exp(Axis::Z, phi[0], 0));
    c
}

pub fn separation_matrix(theta1: f64, theta2: f64) -> ComplexMatrix {
    to_matrix(&build_separation_circuit(theta1, theta2)).expect("one qubit")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryCount {
    pub theta1_factors: usize,
    pub theta2_factors: usize,
    /// `θ₁` and `θ₂` factors together.
    pub theta_factors: usize,
    /// Two-qubit oracle applications `S(x₁, x₂)`, each supplying one factor of each.
    pub joint_oracles: usize,
}

pub fn count_queries(circuit: &Circuit) -> QueryCount {
    let count = |tag| circuit.gates().iter().filter(|g| g.param == Some(tag) && g.kind.name() == "exp_x").count();
    let (a, b) = (count(0), count(1));
    QueryCount { theta1_factors: a, theta2_factors: b, theta_factors: a + b, joint_oracles: a.min(b) }
}

/// The six single-qubit states used by the measurement search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CanonicalState {
    Zero,
    One,
    Plus,
    Minus,
    PlusI,
    MinusI,
}

impl CanonicalState {
    pub const ALL: [CanonicalState; 6] =
        [CanonicalState::Zero, CanonicalState::One, CanonicalState::Plus, CanonicalState::Minus, CanonicalState::PlusI, CanonicalState::MinusI];

    pub fn amplitudes(self) -> [C64; 2] {
        let s = FRAC_1_SQRT_2;
        match self {
            CanonicalState::Zero => [ONE, ZERO],
            CanonicalState::One => [ZERO, ONE],
            CanonicalState::Plus => [c64(s, 0.0), c64(s, 0.0)],
            CanonicalState::Minus => [c64(s, 0.0), c64(-s, 0.0)],
            CanonicalState::PlusI => [c64(s, 0.0), I * s],
            CanonicalState::MinusI => [c64(s, 0.0), -I * s],
        }
    }
}

/// Input state and measured basis state realising zero-error discrimination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementPair {
    pub input: CanonicalState,
    pub measure: CanonicalState,
    /// `true` when the measured outcome fires on class 1; otherwise it fires on class 0
    /// and the distinguished outcome is its complement.
    pub fires_on_class1: bool,
}

/// `|<m|F|ψ>|²`.
pub fn outcome_probability(theta1: f64, theta2: f64, input: CanonicalState, measure: CanonicalState) -> f64 {
    let f = separation_matrix(theta1, theta2);
    let psi = input.amplitudes();
    let m = measure.amplitudes();
    let out = [f.get(0, 0) * psi[0] + f.get(0, 1) * psi[1], f.get(1, 0) * psi[0] + f.get(1, 1) * psi[1]];
    (m[0].conj() * out[0] + m[1].conj() * out[1]).norm_sqr()
}

/// Every canonical pair that separates the promise set with zero error, in search order
/// (input-major over [`CanonicalState::ALL`]).
pub fn search_measurement_pairs(class1_samples: usize) -> Vec<MeasurementPair> {
    let zeros = class0_points();
    let ones = class1_points(class1_samples);
    let mut found = Vec::new();
    for input in CanonicalState::ALL {
        for measure in CanonicalState::ALL {
            let p0: Vec<f64> = zeros.iter().map(|s| outcome_probability(s.theta1, s.theta2, input, measure)).collect();
            let p1: Vec<f64> = ones.iter().map(|s| outcome_probability(s.theta1, s.theta2, input, measure)).collect();
            let low = |v: &[f64]| v.iter().all(|&p| p <= ZERO_ERROR_TOLERANCE);
            let high = |v: &[f64]| v.iter().all(|&p| p >= 1.0 - ZERO_ERROR_TOLERANCE);
            if low(&p0) && high(&p1) {
                found.push(MeasurementPair { input, measure, fires_on_class1: true });
            } else if high(&p0) && low(&p1) {
                found.push(MeasurementPair { input, measure, fires_on_class1: false });
            }
        }
    }
    found
}

/// First pair of [`search_measurement_pairs`].
pub fn derive_measurement_pair() -> Result<MeasurementPair> {
    search_measurement_pairs(64)
        .first()
        .copied()
        .ok_or_else(|| Error::Contract("no canonical input/measurement pair discriminates with zero error".into()))
}

/// Probability of the distinguished outcome (≈ 0 on class 0, ≈ 1 on class 1).
pub fn discriminate(inst: &SeparationInstance, pair: &MeasurementPair) -> Result<f64> {
    if classify(inst.theta1, inst.theta2) == InstanceClass::OutsidePromise {
        return Err(Error::PromiseViolation { theta1: inst.theta1, theta2: inst.theta2 });
    }
    let p = outcome_probability(inst.theta1, inst.theta2, pair.input, pair.measure);
    Ok(if pair.fires_on_class1 { p } else { 1.0 - p })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub theta1: f64,
    pub theta2: f64,
    pub class: InstanceClass,
    pub probability: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminationReport {
    pub pair: MeasurementPair,
    pub queries: QueryCount,
    pub instances: Vec<InstanceResult>,
    /// Largest distance of a probability from its class value.
    pub max_error: f64,
    pub pass: bool,
}

/// Runs the pair over the eight class-0 points and `class1_samples` curve points.
pub fn run_discrimination(pair: &MeasurementPair, class1_samples: usize) -> Result<DiscriminationReport> {
    let mut instances = Vec::new();
    let mut max_error: f64 = 0.0;
    for inst in class0_points().into_iter().chain(class1_points(class1_samples)) {
        let p = discriminate(&inst, pair)?;
        let target = if inst.class == InstanceClass::One { 1.0 } else { 0.0 };
        let err = (p - target).abs();
        max_error = max_error.max(err);
        instances.push(InstanceResult { theta1: inst.theta1, theta2: inst.theta2, class: inst.class, probability: p, pass: err <= ZERO_ERROR_TOLERANCE });
    }
    let queries = count_queries(&build_separation_circuit(0.1, 0.2));
    let pass = instances.iter().all(|r| r.pass) && queries.theta_factors == 6 && queries.joint_oracles == 3;
    Ok(DiscriminationReport { pair: *pair, queries, instances, max_error, pass })
}

/// `e^{iπ/4σ_z} e^{iθσ_y} e^{−iπ/4σ_z}`, which equals `e^{iθσ_x}`.
pub fn conjugated_rotation(theta: f64) -> ComplexMatrix {
    linalg::matmul_chain(&[&pauli_exp(Axis::Z, FRAC_PI_4), &pauli_exp(Axis::Y, theta), &pauli_exp(Axis::Z, -FRAC_PI_4)]).expect("2x2")
}

/// `S(x₁, x₂) = |0><0| ⊗ e^{iθ₁σ_y} + |1><1| ⊗ e^{iθ₂σ_y}`; qubit 0 selects, qubit 1 is data.
pub fn joint_oracle(theta1: f64, theta2: f64) -> ComplexMatrix {
    let mut s = ComplexMatrix::zeros(4, 4);
    for (k, th) in [theta1, theta2].into_iter().enumerate() {
        let r = pauli_exp(Axis::Y, th);
        for a in 0..2 {
            for b in 0..2 {
                s.set(2 * k + a, 2 * k + b, r.get(a, b));
            }
        }
    }
    s
}

/// `T·(I ⊗ e^{iφσ_z})·(H ⊗ I)·T` with `T = (I ⊗ e^{iπ/4σ_z}) S (I ⊗ e^{−iπ/4σ_z})`.
pub fn reduction_operator(theta1: f64, theta2: f64, phi: f64) -> ComplexMatrix {
    let id = ComplexMatrix::identity(2);
    let a = kron(&id, &pauli_exp(Axis::Z, FRAC_PI_4)).expect("4x4");
    let t = linalg::matmul_chain(&[&a, &joint_oracle(theta1, theta2), &a.adjoint()]).expect("4x4");
    let z = kron(&id, &pauli_exp(Axis::Z, phi)).expect("4x4");
    let h = kron(&hadamard(), &id).expect("4x4");
    linalg::matmul_chain(&[&t, &z, &h, &t]).expect("4x4")
}

/// Block `(r, c)` predicted in closed form: `±(1/√2)·e^{iθ_rσ_x} e^{iφσ_z} e^{iθ_cσ_x}`,
/// negative only for `(1, 1)`.
pub fn expected_block(theta1: f64, theta2: f64, phi: f64, r: usize, c: usize) -> ComplexMatrix {
    let th = [theta1, theta2];
    let sign = if r == 1 && c == 1 { -FRAC_1_SQRT_2 } else { FRAC_1_SQRT_2 };
    let m = linalg::matmul_chain(&[&pauli_exp(Axis::X, th[r]), &pauli_exp(Axis::Z, phi), &pauli_exp(Axis::X, th[c])]).expect("2x2");
    m.scale(c64(sign, 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub phase_index: usize,
    pub theta1: f64,
    pub theta2: f64,
    /// Deviation of blocks (0,0), (0,1), (1,0), (1,1).
    pub block_deviation: [f64; 4],
    pub conjugation_deviation: f64,
    pub pass: bool,
}

pub fn verify_block_encoding_reduction(phase_index: usize, theta1: f64, theta2: f64) -> Result<ReductionReport> {
    if !(1..=6).contains(&phase_index) {
        return Err(Error::Input(alloc::format!("phase index {phase_index} outside 1..=6")));
    }
    let phi = qsp_phases()[phase_index];
    let m = reduction_operator(theta1, theta2, phi);
    let mut block_deviation = [0.0; 4];
    for r in 0..2 {
        for c in 0..2 {
            block_deviation[2 * r + c] = m.submatrix(2 * r, 2 * c, 2, 2).max_abs_diff(&expected_block(theta1, theta2, phi, r, c));
        }
    }
    let conjugation_deviation = [theta1, theta2]
        .iter()
        .map(|&t| conjugated_rotation(t).max_abs_diff(&pauli_exp(Axis::X, t)))
        .fold(0.0, f64::max);
    let pass = block_deviation.iter().all(|&d| d <= BLOCK_TOLERANCE) && conjugation_deviation <= BLOCK_TOLERANCE;
    Ok(ReductionReport { phase_index, theta1, theta2, block_deviation, conjugation_deviation, pass })
}

/// Worst case of [`verify_block_encoding_reduction`] over random angles, cycling the
/// phase index through `1..=6`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionSummary {
    pub trials: usize,
    pub seed: u64,
    pub max_block_deviation: f64,
    pub max_conjugation_deviation: f64,
    pub failures: usize,
    pub pass: bool,
}

pub fn run_reduction_suite(trials: usize, seed: u64) -> Result<ReductionSummary> {
    let mut rng = rng::substream(seed, "reduction");
    let (mut block, mut conj, mut failures) = (0.0f64, 0.0f64, 0);
    for t in 0..trials {
        let (t1, t2) = (rng.random_range(-PI..PI), rng.random_range(-PI..PI));
        let r = verify_block_encoding_reduction(1 + t % 6, t1, t2)?;
        block = r.block_deviation.iter().copied().fold(block, f64::max);
        conj = conj.max(r.conjugation_deviation);
        failures += usize::from(!r.pass);
    }
    Ok(ReductionSummary { trials, seed, max_block_deviation: block, max_conjugation_deviation: conj, failures, pass: trials > 0 && failures == 0 })
}

/// Real encoding of `x = e^{iθ}` for the classical baseline: `(cos θ, sin θ)`.
pub fn modality_features(theta: f64) -> [f64; 2] {
    [theta.cos(), theta.sin()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub rank: usize,
    pub seeds: Vec<u64>,
    pub cp_max_error: Vec<f64>,
    pub best_cp_max_error: f64,
    pub quantum_max_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub training_steps: usize,
    pub learning_rate: f64,
    pub class1_samples: usize,
    pub parameter_counts: Vec<(usize, usize)>,
    pub rows: Vec<GapRow>,
}

/// Fits per-modality CP models on the promise set (eight class-0 points and
/// `class1_samples` curve points, inputs `(cos θ, sin θ)` per modality) with Adam on squared
/// error, and reports the worst-case error next to the circuit's.
pub fn cp_baseline_gap_demo(ranks: &[usize], training_steps: usize, learning_rate: f64, seeds: &[u64], class1_samples: usize) -> Result<GapReport> {
    if ranks.iter().any(|&r| r == 0 || r > 8) {
        return Err(Error::Input("ranks must lie in 1..=8".into()));
    }
    let pair = derive_measurement_pair()?;
    let quantum = run_discrimination(&pair, class1_samples)?.max_error;
    let points: Vec<SeparationInstance> = class0_points().into_iter().chain(class1_points(class1_samples)).collect();
    let inputs: Vec<Vec<f64>> = points.iter().map(|p| [modality_features(p.theta1), modality_features(p.theta2)].concat()).collect();
    let targets: Vec<Vec<f64>> = points.iter().map(|p| vec![if p.class == InstanceClass::One { 1.0 } else { 0.0 }]).collect();
    let mut rows = Vec::new();
    let mut parameter_counts = Vec::new();
    for &rank in ranks {
        let mut errs = Vec::new();
        for &seed in seeds {
            let mut model = CpModel::random(2, 2, rank, 1, CpGranularity::PerModality, 0.5, &mut rng::indexed_stream(seed, "cp-gap", rank as u64))?;
            train_cp_mse(&mut model, &inputs, &targets, training_steps, learning_rate)?;
            errs.push(max_abs_error(&model, &inputs, &targets)?);
            if parameter_counts.last().is_none_or(|&(r, _)| r != rank) {
                parameter_counts.push((rank, model.parameter_count()));
            }
        }
        let best = errs.iter().copied().fold(f64::INFINITY, f64::min);
        rows.push(GapRow { rank, seeds: seeds.to_vec(), cp_max_error: errs, best_cp_max_error: best, quantum_max_error: quantum });
    }
    Ok(GapReport { training_steps, learning_rate, class1_samples, parameter_counts, rows })
}

/// Unitarity defect and `|det − 1|` of the signal-processing product.
pub fn separation_unitarity(theta1: f64, theta2: f64) -> Result<(f64, f64)> {
    let f = separation_matrix(theta1, theta2);
    Ok((linalg::unitarity_defect(&f), (linalg::determinant(&f)? - ONE).norm()))
}

/// `e^{iφσ_z}` products at `θ₁ = θ₂ = 0`, for the diagonal sanity check.
pub fn zero_angle_matrix() -> ComplexMatrix {
    let phi: f64 = qsp_phases().iter().sum();
    pauli_exp(Axis::Z, phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::matmul;

    #[test]
    fn classes() {
        assert_eq!(classify(0.0, FRAC_PI_2), InstanceClass::Zero);
        assert_eq!(classify(-FRAC_PI_2, PI), InstanceClass::Zero);
        assert_eq!(classify(FRAC_PI_4, FRAC_PI_4), InstanceClass::One);
        assert_eq!(classify(FRAC_PI_3, 0.0), InstanceClass::One);
        assert_eq!(classify(0.3, 0.4), InstanceClass::OutsidePromise);
        assert!(class0_points().iter().all(|p| p.class == InstanceClass::Zero));
        assert!(class1_points(64).iter().all(|p| p.class == InstanceClass::One));
    }

    #[test]
    fn circuit_structure() {
        let c = build_separation_circuit(0.7, -1.2);
        let q = count_queries(&c);
        assert_eq!((q.theta1_factors, q.theta2_factors, q.theta_factors, q.joint_oracles), (3, 3, 6, 3));
        assert!(separation_matrix(0.0, 0.0).max_abs_diff(&zero_angle_matrix()) < 1e-14);
        let (u, d) = separation_unitarity(0.7, -1.2).unwrap();
        assert!(u < 1e-12 && d < 1e-12);
    }

    #[test]
    fn written_product_order() {
        let (t1, t2) = (0.37, -0.81);
        let phi = qsp_phases();
        let mut m = pauli_exp(Axis::Z, phi[0]);
        for k in 0..3 {
            for f in [
                pauli_exp(Axis::X, t1),
                pauli_exp(Axis::Z, phi[2 * k + 1]),
                pauli_exp(Axis::X, t2),
                pauli_exp(Axis::Z, phi[2 * k + 2]),
            ] {
                m = matmul(&m, &f).unwrap();
            }
        }
        assert!(m.max_abs_diff(&separation_matrix(t1, t2)) < 1e-14);
    }

    #[test]
    fn promise_is_enforced() {
        let pair = derive_measurement_pair().unwrap();
        assert!(matches!(discriminate(&SeparationInstance::new(0.3, 0.4), &pair), Err(Error::PromiseViolation { .. })));
        assert!(discriminate(&SeparationInstance::new(0.0, FRAC_PI_2), &pair).unwrap() <= ZERO_ERROR_TOLERANCE);
        assert!(discriminate(&SeparationInstance::new(FRAC_PI_4, FRAC_PI_4), &pair).unwrap() >= 1.0 - ZERO_ERROR_TOLERANCE);
        assert!(discriminate(&SeparationInstance::new(FRAC_PI_3, 0.0), &pair).unwrap() >= 1.0 - ZERO_ERROR_TOLERANCE);
    }

    #[test]
    fn reduction_blocks() {
        assert!(conjugated_rotation(0.9).max_abs_diff(&pauli_exp(Axis::X, 0.9)) < 1e-12);
        for j in 1..=6 {
            assert!(verify_block_encoding_reduction(j, 0.4, -1.1).unwrap().pass);
        }
        let r = reduction_operator(0.0, 0.0, FRAC_PI_4);
        let diag = pauli_exp(Axis::Z, FRAC_PI_4).scale(c64(FRAC_1_SQRT_2, 0.0));
        assert!(r.submatrix(0, 2, 2, 2).max_abs_diff(&diag) < 1e-12);
        assert!(verify_block_encoding_reduction(0, 0.1, 0.1).is_err());
    }
}
