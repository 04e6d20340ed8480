//! Randomised Pauli-plane observables, exact expectations and shot-based estimation.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_4, TAU};

#[allow(unused_imports)] // shadowed by inherent methods when std is in the graph
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::gates::{apply_gate, apply_in_place, Gate};
use crate::linalg::{c64, pauli, Axis, ComplexMatrix, QuantumState, C64, ZERO};
use crate::qfl::{assemble, QflCircuitSpec};
use crate::rng;
use crate::stateprep::build_hadamard_prefix;
use crate::{Error, Result};

const NORM_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Plane {
    #[serde(rename = "XZ")]
    Xz,
    #[serde(rename = "XY")]
    Xy,
    #[serde(rename = "YZ")]
    Yz,
}

impl Plane {
    pub const ALL: [Plane; 3] = [Plane::Xz, Plane::Xy, Plane::Yz];

    pub fn axes(self) -> (Axis, Axis) {
        match self {
            Plane::Xz => (Axis::X, Axis::Z),
            Plane::Xy => (Axis::X, Axis::Y),
            Plane::Yz => (Axis::Y, Axis::Z),
        }
    }
}

/// `cos θ·σ_a + sin θ·σ_b` on one qubit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observable {
    pub plane: Plane,
    pub angle: f64,
    pub target: usize,
}

impl Observable {
    pub fn new(plane: Plane, angle: f64, target: usize) -> Self {
        Self { plane, angle, target }
    }

    /// The two Pauli terms and their coefficients.
    pub fn terms(&self) -> [(Axis, f64); 2] {
        let (a, b) = self.plane.axes();
        [(a, self.angle.cos()), (b, self.angle.sin())]
    }

    pub fn matrix(&self) -> ComplexMatrix {
        let [(a, ca), (b, cb)] = self.terms();
        let (pa, pb) = (pauli(a), pauli(b));
        ComplexMatrix::from_fn(2, 2, |r, c| pa.get(r, c) * ca + pb.get(r, c) * cb)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservablePlan {
    pub seed: u64,
    pub observables: Vec<Observable>,
}

impl ObservablePlan {
    pub fn len(&self) -> usize {
        self.observables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observables.is_empty()
    }
}

/// `h` observables with plane, angle and target (one of `n_qubits` index qubits) drawn
/// from the seed.
pub fn draw_plan(h: usize, n_qubits: usize, seed: u64) -> Result<ObservablePlan> {
    if h == 0 || n_qubits == 0 {
        return Err(Error::Input("a plan needs at least one observable and one qubit".into()));
    }
    let mut rng = rng::substream(seed, "measurement-plan");
    let observables = (0..h)
        .map(|_| {
            let plane = Plane::ALL[rng.random_range(0..3)];
            let angle = rng.random_range(0.0..TAU);
            let target = rng.random_range(0..n_qubits);
            Observable { plane, angle, target }
        })
        .collect();
    Ok(ObservablePlan { seed, observables })
}

fn check_normalized(state: &QuantumState) -> Result<()> {
    let n = state.norm_sqr();
    if (n - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::Contract(alloc::format!("state has squared norm {n}")));
    }
    Ok(())
}

fn check_target(state: &QuantumState, target: usize) -> Result<()> {
    if target >= state.num_qubits() {
        return Err(Error::Shape(alloc::format!("qubit {target} on a {}-qubit state", state.num_qubits())));
    }
    Ok(())
}

/// Reduced density matrix of one qubit.
pub fn reduced_density(state: &QuantumState, target: usize) -> Result<ComplexMatrix> {
    check_target(state, target)?;
    let b = 1usize << (state.num_qubits() - 1 - target);
    let amps = state.amplitudes();
    let mut rho = [[ZERO; 2]; 2];
    for i in (0..amps.len()).filter(|i| i & b == 0) {
        let (a0, a1) = (amps[i], amps[i | b]);
        rho[0][0] += a0 * a0.conj();
        rho[0][1] += a0 * a1.conj();
        rho[1][0] += a1 * a0.conj();
        rho[1][1] += a1 * a1.conj();
    }
    Ok(ComplexMatrix::from_fn(2, 2, |r, c| rho[r][c]))
}

fn trace_product(rho: &ComplexMatrix, o: &ComplexMatrix) -> f64 {
    let mut t = ZERO;
    for r in 0..2 {
        for c in 0..2 {
            t += rho.get(r, c) * o.get(c, r);
        }
    }
    t.re
}

/// `<ψ|O|ψ>` for a normalised state.
pub fn expectation_exact(state: &QuantumState, obs: &Observable) -> Result<f64> {
    check_normalized(state)?;
    let rho = reduced_density(state, obs.target)?;
    Ok(trace_product(&rho, &obs.matrix()))
}

/// Basis change `W` with `W O W† = σ_z` for a one-qubit observable with eigenvalues ±1.
pub fn eigenbasis_rotation(o: &ComplexMatrix) -> ComplexMatrix {
    // columns of (I + O)/2 span the +1 eigenspace
    let p = [[(o.get(0, 0) + 1.0) * 0.5, o.get(0, 1) * 0.5], [o.get(1, 0) * 0.5, (o.get(1, 1) + 1.0) * 0.5]];
    let col = |c: usize| [p[0][c], p[1][c]];
    let norm = |v: [C64; 2]| (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    let v = if norm(col(0)) >= norm(col(1)) { col(0) } else { col(1) };
    let n = norm(v);
    let (a, b) = (v[0] / n, v[1] / n);
    ComplexMatrix::from_fn(2, 2, |r, c| match (r, c) {
        (0, 0) => a.conj(),
        (0, 1) => b.conj(),
        (1, 0) => -b,
        _ => a,
    })
}

/// Probability of reading `0` on `target` after rotating it by `w`.
fn rotated_zero_probability(state: &QuantumState, target: usize, w: &ComplexMatrix) -> Result<f64> {
    let mut amps = state.amplitudes().to_vec();
    let gate = Gate::unitary(w.clone(), vec![target])?;
    apply_gate(&gate, state.num_qubits(), &mut amps);
    let b = 1usize << (state.num_qubits() - 1 - target);
    Ok(amps.iter().enumerate().filter(|(i, _)| i & b == 0).map(|(_, a)| a.norm_sqr()).sum::<f64>().clamp(0.0, 1.0))
}

/// Shot budget for estimating an `m`-term Pauli combination to additive error `epsilon`
/// with failure probability `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotEstimator {
    pub epsilon: f64,
    pub delta: f64,
    pub m: usize,
    /// Replaces the Hoeffding budget; used for under-sampled controls.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots_override: Option<usize>,
}

impl ShotEstimator {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        let e = Self { epsilon, delta, m: 2, shots_override: None };
        e.validate()?;
        Ok(e)
    }

    pub fn with_shots(mut self, shots: usize) -> Self {
        self.shots_override = Some(shots);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) || !(self.delta > 0.0 && self.delta < 1.0) || self.m == 0 {
            return Err(Error::Input(alloc::format!(
                "invalid estimator: epsilon {}, delta {}, m {}",
                self.epsilon,
                self.delta,
                self.m
            )));
        }
        if self.shots_override == Some(0) {
            return Err(Error::Input("shot override must be positive".into()));
        }
        Ok(())
    }

    /// `ceil(2m·ln(2m/δ)/ε²)`
    pub fn required_shots(&self) -> usize {
        let m = self.m as f64;
        (2.0 * m * (2.0 * m / self.delta).ln() / (self.epsilon * self.epsilon)).ceil() as usize
    }

    pub fn total_shots(&self) -> usize {
        self.shots_override.unwrap_or_else(|| self.required_shots())
    }
}

/// Splits `total` shots in proportion to `|c_i|` by largest remainder. Every term with a
/// non-zero coefficient gets at least one shot, so the result may exceed `total` when
/// `total` is smaller than the number of such terms.
pub fn allocate_shots(coefficients: &[f64], total: usize) -> Vec<usize> {
    let lambda: f64 = coefficients.iter().map(|c| c.abs()).sum();
    if lambda == 0.0 {
        return vec![0; coefficients.len()];
    }
    let exact: Vec<f64> = coefficients.iter().map(|c| total as f64 * c.abs() / lambda).collect();
    let mut alloc: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = alloc.iter().sum();
    let mut order: Vec<usize> = (0..exact.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        alloc[i] += 1;
    }
    for (n, c) in alloc.iter_mut().zip(coefficients) {
        if *n == 0 && *c != 0.0 {
            *n = 1;
        }
    }
    alloc
}

/// Mean of `shots` ±1 outcomes with `P(+1) = p_plus`.
fn sample_mean<R: Rng + ?Sized>(p_plus: f64, shots: usize, rng: &mut R) -> f64 {
    let plus = (0..shots).filter(|_| rng.random::<f64>() < p_plus).count();
    (2.0 * plus as f64 - shots as f64) / shots as f64
}

/// `μ̂ = Σ c_i X̄_i`: each Pauli term is rotated into its eigenbasis and sampled `N_i`
/// times from the Born distribution.
pub fn estimate_shots<R: Rng + ?Sized>(state: &QuantumState, obs: &Observable, estimator: &ShotEstimator, rng: &mut R) -> Result<f64> {
    check_normalized(state)?;
    check_target(state, obs.target)?;
    estimator.validate()?;
    let terms = obs.terms();
    let coeffs: Vec<f64> = terms.iter().map(|t| t.1).collect();
    let shots = allocate_shots(&coeffs, estimator.total_shots());
    let mut estimate = 0.0;
    for ((axis, c), n) in terms.iter().zip(shots) {
        if n == 0 {
            continue;
        }
        let w = eigenbasis_rotation(&pauli(*axis));
        let p0 = rotated_zero_probability(state, obs.target, &w)?;
        estimate += c * sample_mean(p0, n, rng);
    }
    Ok(estimate)
}

/// Test state of the sampling-bound check: `R_y(1)|0>`.
pub fn lemma_test_state() -> QuantumState {
    let (c, s) = (0.5f64.cos(), 0.5f64.sin());
    QuantumState::from_amplitudes(vec![c64(c, 0.0), c64(s, 0.0)]).expect("two amplitudes")
}

/// Observable of the sampling-bound check: equal weight on `σ_x` and `σ_z`.
pub fn lemma_observable() -> Observable {
    Observable::new(Plane::Xz, FRAC_PI_4, 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingReport {
    pub epsilon: f64,
    pub delta: f64,
    pub m: usize,
    pub shots: usize,
    pub trials: usize,
    pub seed: u64,
    pub exact: f64,
    pub within: usize,
    pub fraction: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Runs `trials` independent estimations of the test observable and checks that at
/// least `1 − δ − 0.02` of them land within `ε` of the exact value.
pub fn validate_sampling_lemma(epsilon: f64, delta: f64, trials: usize, seed: u64, shots: Option<usize>) -> Result<SamplingReport> {
    if trials < 100 {
        return Err(Error::Input(alloc::format!("{trials} trials; at least 100 are required")));
    }
    let mut estimator = ShotEstimator::new(epsilon, delta)?;
    estimator.shots_override = shots;
    estimator.validate()?;
    let state = lemma_test_state();
    let obs = lemma_observable();
    let exact = expectation_exact(&state, &obs)?;
    let mut within = 0;
    for t in 0..trials {
        let mut rng = rng::indexed_stream(seed, "sampling-lemma", t as u64);
        if (estimate_shots(&state, &obs, &estimator, &mut rng)? - exact).abs() <= epsilon {
            within += 1;
        }
    }
    let fraction = within as f64 / trials as f64;
    let threshold = 1.0 - delta - 0.02;
    Ok(SamplingReport {
        epsilon,
        delta,
        m: estimator.m,
        shots: estimator.total_shots(),
        trials,
        seed,
        exact,
        within,
        fraction,
        threshold,
        pass: fraction >= threshold,
    })
}

/// How `fused_output` reads the observables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutputMode {
    Exact,
    Shots { estimator: ShotEstimator, seed: u64 },
}

/// `F_P(x)·(H^{⊗n} ⊗ I)|0…0>`.
pub fn fused_state(spec: &QflCircuitSpec, x: &[f64]) -> Result<QuantumState> {
    let mut circuit = build_hadamard_prefix(&spec.layout);
    circuit.append(&assemble(spec, x)?)?;
    let mut state = QuantumState::zero(spec.total_qubits());
    apply_in_place(&circuit, state.amplitudes_mut());
    Ok(state)
}

pub fn fused_output(spec: &QflCircuitSpec, x: &[f64], plan: &ObservablePlan, mode: OutputMode) -> Result<Vec<f64>> {
    let state = fused_state(spec, x)?;
    plan_expectations(&state, plan, mode)
}

/// Expectations of every plan observable on a prepared state.
pub fn plan_expectations(state: &QuantumState, plan: &ObservablePlan, mode: OutputMode) -> Result<Vec<f64>> {
    if let Some(o) = plan.observables.iter().find(|o| o.target >= state.num_qubits()) {
        return Err(Error::Shape(alloc::format!("observable on qubit {} of a {}-qubit register", o.target, state.num_qubits())));
    }
    match mode {
        OutputMode::Exact => plan.observables.iter().map(|o| expectation_exact(state, o)).collect(),
        OutputMode::Shots { estimator, seed } => plan
            .observables
            .iter()
            .enumerate()
            .map(|(i, o)| estimate_shots(state, o, &estimator, &mut rng::indexed_stream(seed, "fused-shots", i as u64)))
            .collect(),
    }
}
