//! Hybrid training: QFL features, a linear decoder to class logits, parameter-shift
//! gradients for the circuit and Adam on everything.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

#[allow(unused_imports)] // shadowed by inherent methods when std is in the graph
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ansatz::{AnsatzSpec, Entangler, InitMode, ParameterVector};
use crate::baselines::{CpGranularity, CpModel};
use crate::gates::{apply_gate, Circuit, Gate, GateKind};
use crate::linalg::QuantumState;
use crate::measurement::{draw_plan, plan_expectations, ObservablePlan, OutputMode, ShotEstimator};
use crate::qfl::{assemble, BlockSet, QflCircuitSpec};
use crate::rng;
use crate::stateprep::{build_hadamard_prefix, RegisterLayout};
use crate::{Error, Result};

/// Adaptive-moment gradient descent with the usual `β = (0.9, 0.999)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize, learning_rate: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::Input(alloc::format!("learning rate {learning_rate} must be positive")));
        }
        Ok(Self { learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, m: vec![0.0; len], v: vec![0.0; len], t: 0 })
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] -= self.learning_rate * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.epsilon);
        }
    }
}

/// One monomial `c · Π x_i` of the planted polynomial; indices may repeat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTerm {
    pub variables: Vec<usize>,
    pub coefficient: f64,
}

/// Binary task labelled by thresholding a planted polynomial at its sample median.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub num_modalities: usize,
    pub feature_dim: usize,
    pub degree: usize,
    /// Seed as requested and the one that produced a balanced split.
    pub requested_seed: u64,
    pub seed: u64,
    pub terms: Vec<PlantedTerm>,
    pub threshold: f64,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

/// Index ranges of the 70/15/15 split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: core::ops::Range<usize>,
    pub validation: core::ops::Range<usize>,
    pub test: core::ops::Range<usize>,
}

pub const MAX_TASK_FEATURES: usize = 7;
pub const MAX_TASK_DEGREE: usize = 4;
const MAX_REGENERATIONS: u64 = 64;

impl SyntheticTask {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.num_modalities * self.feature_dim
    }

    pub fn planted_value(&self, x: &[f64]) -> f64 {
        evaluate_terms(&self.terms, x)
    }

    pub fn positive_fraction(&self) -> f64 {
        self.labels.iter().filter(|&&l| l == 1).count() as f64 / self.len() as f64
    }

    pub fn splits(&self) -> Splits {
        let n = self.len();
        let train = n * 70 / 100;
        let val = n * 15 / 100;
        Splits { train: 0..train, validation: train..train + val, test: train + val..n }
    }
}

fn evaluate_terms(terms: &[PlantedTerm], x: &[f64]) -> f64 {
    terms.iter().map(|t| t.coefficient * t.variables.iter().map(|&i| x[i]).product::<f64>()).sum()
}

/// Modality of variable `i` (modality-major concatenation).
fn modality_of(i: usize, feature_dim: usize) -> usize {
    i / feature_dim
}

fn draw_terms<R: Rng + ?Sized>(m: usize, d: usize, degree: usize, rng: &mut R) -> Vec<PlantedTerm> {
    let n = m * d;
    let mut terms = Vec::new();
    if degree == 1 {
        // linear control: every variable, the first one dominant
        for i in 0..n {
            let c = if i == 0 { 1.0 } else { rng.random_range(-0.5..=0.5) };
            terms.push(PlantedTerm { variables: vec![i], coefficient: c });
        }
        return terms;
    }
    // leading monomial of full degree touching at least two modalities
    let first = rng.random_range(0..d);
    let other_mod = 1 + rng.random_range(0..m - 1);
    let second = other_mod * d + rng.random_range(0..d);
    let mut lead = vec![first, second];
    while lead.len() < degree {
        lead.push(rng.random_range(0..n));
    }
    lead.sort_unstable();
    terms.push(PlantedTerm { variables: lead, coefficient: 1.0 });
    for _ in 0..n {
        let k = rng.random_range(1..=degree);
        let mut vars: Vec<usize> = (0..k).map(|_| rng.random_range(0..n)).collect();
        vars.sort_unstable();
        terms.push(PlantedTerm { variables: vars, coefficient: rng.random_range(-0.5..=0.5) });
    }
    terms
}

fn label_samples(terms: &[PlantedTerm], features: &[Vec<f64>]) -> (f64, Vec<u8>) {
    let values: Vec<f64> = features.iter().map(|x| evaluate_terms(terms, x)).collect();
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
    (median, values.iter().map(|&v| u8::from(v > median)).collect())
}

fn check_task_shape(m: usize, d: usize, degree: usize, n_samples: usize) -> Result<()> {
    if m == 0 || d == 0 || m * d > MAX_TASK_FEATURES {
        return Err(Error::Input(alloc::format!("M·D = {} must lie in 1..={MAX_TASK_FEATURES}", m * d)));
    }
    if degree == 0 || degree > MAX_TASK_DEGREE {
        return Err(Error::Input(alloc::format!("planted degree {degree} must lie in 1..={MAX_TASK_DEGREE}")));
    }
    if degree >= 2 && m < 2 {
        return Err(Error::Input("a cross-modal term needs at least two modalities".into()));
    }
    if n_samples < 20 {
        return Err(Error::Input("at least 20 samples are required".into()));
    }
    Ok(())
}

fn balanced(labels: &[u8]) -> bool {
    let f = labels.iter().filter(|&&l| l == 1).count() as f64 / labels.len() as f64;
    (0.35..=0.65).contains(&f)
}

/// Features uniform on `[-1, 1]`, labels from a random planted polynomial. Unbalanced
/// draws are regenerated with the seed incremented.
pub fn generate_task(m: usize, d: usize, degree: usize, n_samples: usize, seed: u64) -> Result<SyntheticTask> {
    check_task_shape(m, d, degree, n_samples)?;
    for bump in 0..MAX_REGENERATIONS {
        let s = seed.wrapping_add(bump);
        let mut rng = rng::substream(s, "synthetic-task");
        let terms = draw_terms(m, d, degree, &mut rng);
        let features: Vec<Vec<f64>> = (0..n_samples).map(|_| (0..m * d).map(|_| rng.random_range(-1.0..=1.0)).collect()).collect();
        let (threshold, labels) = label_samples(&terms, &features);
        if balanced(&labels) {
            return Ok(SyntheticTask { num_modalities: m, feature_dim: d, degree, requested_seed: seed, seed: s, terms, threshold, features, labels });
        }
    }
    Err(Error::Input(alloc::format!("no balanced task within {MAX_REGENERATIONS} seeds of {seed}")))
}

/// Task with a caller-chosen planted polynomial.
pub fn task_from_terms(m: usize, d: usize, terms: Vec<PlantedTerm>, n_samples: usize, seed: u64) -> Result<SyntheticTask> {
    let degree = terms.iter().map(|t| t.variables.len()).max().unwrap_or(0);
    check_task_shape(m, d, degree.max(1), n_samples)?;
    if terms.iter().flat_map(|t| &t.variables).any(|&i| i >= m * d) {
        return Err(Error::Input("planted term references a missing feature".into()));
    }
    let mut rng = rng::substream(seed, "synthetic-task");
    let features: Vec<Vec<f64>> = (0..n_samples).map(|_| (0..m * d).map(|_| rng.random_range(-1.0..=1.0)).collect()).collect();
    let (threshold, labels) = label_samples(&terms, &features);
    Ok(SyntheticTask { num_modalities: m, feature_dim: d, degree, requested_seed: seed, seed, terms, threshold, features, labels })
}

/// Does the term multiply features from two or more modalities?
pub fn is_cross_modal(term: &PlantedTerm, feature_dim: usize) -> bool {
    term.variables.iter().any(|&i| modality_of(i, feature_dim) != modality_of(term.variables[0], feature_dim))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Loss {
    #[default]
    CrossEntropy,
    /// `−α_y (1 − p_y)^γ log p_y` with `α` the inverse training class frequency.
    Focal { gamma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub loss: Loss,
    pub seed: u64,
    /// Shots per observable when training on sampled expectations; exact otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shots: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, batch_size: 16, max_epochs: 40, patience: 5, loss: Loss::CrossEntropy, seed: 0, shots: None }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Input("learning rate must be positive".into()));
        }
        if self.patience == 0 || self.batch_size == 0 {
            return Err(Error::Input("patience and batch size must be at least 1".into()));
        }
        if let Loss::Focal { gamma } = self.loss {
            if !(gamma >= 0.0) {
                return Err(Error::Input("focal gamma must be non-negative".into()));
            }
        }
        Ok(())
    }
}

/// Linear map from the fused vector to two logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoder {
    pub inputs: usize,
    pub classes: usize,
    /// `classes × inputs`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Decoder {
    pub fn random<R: Rng + ?Sized>(inputs: usize, classes: usize, scale: f64, rng: &mut R) -> Self {
        let weights = (0..inputs * classes).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
        Self { inputs, classes, weights, bias: vec![0.0; classes] }
    }

    pub fn logits(&self, f: &[f64]) -> Vec<f64> {
        (0..self.classes)
            .map(|c| self.bias[c] + self.weights[c * self.inputs..][..self.inputs].iter().zip(f).map(|(w, x)| w * x).sum::<f64>())
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn max_abs_weight(&self) -> f64 {
        self.weights.iter().chain(&self.bias).fold(0.0, |a, w| a.max(w.abs()))
    }
}

/// QFL circuit, observable plan and decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QflModel {
    pub spec: QflCircuitSpec,
    pub plan: ObservablePlan,
    pub decoder: Decoder,
}

/// Architecture knobs of [`QflModel::init`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub depth: usize,
    pub layers: usize,
    pub entangler: Entangler,
    pub init: InitMode,
    pub observables: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { depth: 2, layers: 5, entangler: Entangler::Ring, init: InitMode::SmallAngle, observables: 8 }
    }
}

impl QflModel {
    pub fn init(num_features: usize, config: &ModelConfig, seed: u64) -> Result<Self> {
        let layout = RegisterLayout::for_features(num_features)?;
        let ansatz = AnsatzSpec::new(layout.n_index, config.layers, config.entangler)?;
        let params = ParameterVector::init(config.depth + 1, ansatz.params_per_block(), config.init, &mut rng::substream(seed, "ansatz"));
        let spec = QflCircuitSpec::with_ansatz(config.depth, layout, ansatz, params)?;
        let plan = draw_plan(config.observables, layout.n_index, rng::derive_seed(seed, "plan"))?;
        let decoder = Decoder::random(config.observables, 2, 0.1, &mut rng::substream(seed, "decoder"));
        Ok(Self { spec, plan, decoder })
    }

    pub fn circuit_parameters(&self) -> usize {
        match &self.spec.blocks {
            BlockSet::Ansatz { params, .. } => params.len(),
            BlockSet::Fixed { .. } => 0,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.circuit_parameters() + self.decoder.parameter_count()
    }
}

fn theta_of(spec: &QflCircuitSpec) -> Option<&ParameterVector> {
    match &spec.blocks {
        BlockSet::Ansatz { params, .. } => Some(params),
        BlockSet::Fixed { .. } => None,
    }
}

fn theta_mut(spec: &mut QflCircuitSpec) -> Option<&mut ParameterVector> {
    match &mut spec.blocks {
        BlockSet::Ansatz { params, .. } => Some(params),
        BlockSet::Fixed { .. } => None,
    }
}

/// Full circuit `F_P(x)·(H^{⊗n} ⊗ I)` as run from `|0…0>`.
fn forward_circuit(spec: &QflCircuitSpec, x: &[f64]) -> Result<Circuit> {
    let mut circuit = build_hadamard_prefix(&spec.layout);
    circuit.append(&assemble(spec, x)?)?;
    Ok(circuit)
}

fn shifted(gate: &Gate, s: f64) -> Gate {
    let mut g = gate.clone();
    if let GateKind::Rx { theta } | GateKind::Ry { theta } | GateKind::Rz { theta } = &mut g.kind {
        *theta += s;
    }
    g
}

fn is_rotation(g: &Gate) -> bool {
    matches!(g.kind, GateKind::Rx { .. } | GateKind::Ry { .. } | GateKind::Rz { .. })
}

/// Runs `circuit` from `|0…0>`, optionally adding `shift` to the angle of gate `at`.
fn run(circuit: &Circuit, shifted_at: Option<(usize, f64)>) -> QuantumState {
    let n = circuit.num_qubits();
    let mut state = QuantumState::zero(n);
    for (i, gate) in circuit.gates().iter().enumerate() {
        match shifted_at {
            Some((at, s)) if at == i => apply_gate(&shifted(gate, s), n, state.amplitudes_mut()),
            _ => apply_gate(gate, n, state.amplitudes_mut()),
        }
    }
    state
}

/// Gate positions of circuit parameters `0..count`. Each must drive exactly one rotation.
fn shift_sites(spec: &QflCircuitSpec, circuit: &Circuit, count: usize) -> Result<Vec<usize>> {
    let available = theta_of(spec).map_or(0, ParameterVector::len);
    if spec.su_normalized || count > available {
        return Err(Error::UnsupportedGradient(count.min(available)));
    }
    let mut sites: Vec<Option<usize>> = vec![None; count];
    for (i, g) in circuit.gates().iter().enumerate() {
        let Some(p) = g.param.filter(|&p| p < count) else { continue };
        if sites[p].is_some() || !is_rotation(g) {
            return Err(Error::UnsupportedGradient(p));
        }
        sites[p] = Some(i);
    }
    sites.iter().enumerate().map(|(p, s)| s.ok_or(Error::UnsupportedGradient(p))).collect()
}

/// Position of the rotation gate carrying parameter `index`.
fn shift_site(spec: &QflCircuitSpec, circuit: &Circuit, index: usize) -> Result<usize> {
    if spec.su_normalized || theta_of(spec).is_none_or(|p| index >= p.len()) {
        return Err(Error::UnsupportedGradient(index));
    }
    let mut sites = circuit.gates().iter().enumerate().filter(|(_, g)| g.param == Some(index));
    match (sites.next(), sites.next()) {
        (Some((i, g)), None) if is_rotation(g) => Ok(i),
        _ => Err(Error::UnsupportedGradient(index)),
    }
}

/// `(ψ(θ_i + π/2), ψ(θ_i − π/2))` per site, sharing the unshifted prefix.
fn shifted_states(circuit: &Circuit, sites: &[usize]) -> Vec<(QuantumState, QuantumState)> {
    let n = circuit.num_qubits();
    let gates = circuit.gates();
    let mut order: Vec<(usize, usize)> = sites.iter().enumerate().map(|(p, &s)| (s, p)).collect();
    order.sort_unstable();
    let mut out = vec![(QuantumState::zero(n), QuantumState::zero(n)); sites.len()];
    let mut state = QuantumState::zero(n);
    let mut next = 0;
    for (site, p) in order {
        for g in &gates[next..site] {
            apply_gate(g, n, state.amplitudes_mut());
        }
        next = site;
        let branch = |s: f64| {
            let mut b = state.clone();
            apply_gate(&shifted(&gates[site], s), n, b.amplitudes_mut());
            for g in &gates[site + 1..] {
                apply_gate(g, n, b.amplitudes_mut());
            }
            b
        };
        out[p] = (branch(FRAC_PI_2), branch(-FRAC_PI_2));
    }
    out
}

/// `Σ_h upstream_h · (f_h(θ + π/2) − f_h(θ − π/2)) / 2` for circuit parameter
/// `theta_index`, with `upstream = ∂L/∂f`.
pub fn parameter_shift_gradient(spec: &QflCircuitSpec, x: &[f64], plan: &ObservablePlan, upstream: &[f64], theta_index: usize) -> Result<f64> {
    if upstream.len() != plan.len() {
        return Err(Error::Shape("upstream gradient must match the plan length".into()));
    }
    let circuit = forward_circuit(spec, x)?;
    let site = shift_site(spec, &circuit, theta_index)?;
    let plus = run(&circuit, Some((site, FRAC_PI_2)));
    let minus = run(&circuit, Some((site, -FRAC_PI_2)));
    combine_shift(&plus, &minus, plan, upstream, OutputMode::Exact)
}

fn combine_shift(plus: &QuantumState, minus: &QuantumState, plan: &ObservablePlan, upstream: &[f64], mode: OutputMode) -> Result<f64> {
    let plus = plan_expectations(plus, plan, mode)?;
    let minus = plan_expectations(minus, plan, mode)?;
    Ok(upstream.iter().zip(plus.iter().zip(&minus)).map(|(u, (p, m))| u * (p - m) / 2.0).sum())
}

/// Exact fused vector of `x`.
pub fn features(model: &QflModel, x: &[f64]) -> Result<Vec<f64>> {
    plan_expectations(&run(&forward_circuit(&model.spec, x)?, None), &model.plan, OutputMode::Exact)
}

/// Class-1 probability.
pub fn predict_proba(model: &QflModel, x: &[f64]) -> Result<f64> {
    let z = model.decoder.logits(&features(model, x)?);
    Ok(softmax(&z)[1])
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Per-class weights of the focal loss: `n / (2·n_c)` on the training labels.
pub fn focal_alpha(labels: &[u8]) -> [f64; 2] {
    let n = labels.len() as f64;
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let neg = n - pos;
    [if neg > 0.0 { n / (2.0 * neg) } else { 1.0 }, if pos > 0.0 { n / (2.0 * pos) } else { 1.0 }]
}

/// Loss and `∂L/∂z` for one sample.
pub fn loss_and_grad(logits: &[f64], label: u8, loss: Loss, alpha: [f64; 2]) -> (f64, Vec<f64>) {
    let p = softmax(logits);
    let y = label as usize;
    let py = p[y].max(1e-300);
    match loss {
        Loss::CrossEntropy => {
            let g = p.iter().enumerate().map(|(k, &pk)| pk - f64::from(u8::from(k == y))).collect();
            (-py.ln(), g)
        }
        Loss::Focal { gamma } => {
            let a = alpha[y];
            let q = 1.0 - py;
            let l = -a * q.powf(gamma) * py.ln();
            // dL/dp_y, then dp_y/dz_k = p_y (δ_yk − p_k)
            let dl_dp = -a * (q.powf(gamma) / py - gamma * q.powf(gamma - 1.0) * py.ln());
            let dl_dp = if gamma == 0.0 { -a / py } else { dl_dp };
            let g = p.iter().enumerate().map(|(k, &pk)| dl_dp * py * (f64::from(u8::from(k == y)) - pk)).collect();
            (l, g)
        }
    }
}

/// Flattened trainable parameters: circuit angles, then decoder weights and bias.
pub fn flatten(model: &QflModel) -> Vec<f64> {
    let mut out = theta_of(&model.spec).map(|p| p.theta.clone()).unwrap_or_default();
    out.extend(&model.decoder.weights);
    out.extend(&model.decoder.bias);
    out
}

pub fn unflatten(model: &mut QflModel, params: &[f64]) {
    let k = model.circuit_parameters();
    if let Some(p) = theta_mut(&mut model.spec) {
        p.theta.copy_from_slice(&params[..k]);
    }
    let w = model.decoder.weights.len();
    model.decoder.weights.copy_from_slice(&params[k..k + w]);
    model.decoder.bias.copy_from_slice(&params[k + w..]);
}

/// Loss and gradient over all trainable parameters for one sample.
pub fn sample_gradient(model: &QflModel, x: &[f64], label: u8, loss: Loss, alpha: [f64; 2], mode: OutputMode) -> Result<(f64, Vec<f64>)> {
    let circuit = forward_circuit(&model.spec, x)?;
    let f = plan_expectations(&run(&circuit, None), &model.plan, mode)?;
    let z = model.decoder.logits(&f);
    let (l, dz) = loss_and_grad(&z, label, loss, alpha);
    let dec = &model.decoder;
    let upstream: Vec<f64> = (0..dec.inputs).map(|h| (0..dec.classes).map(|c| dz[c] * dec.weights[c * dec.inputs + h]).sum()).collect();

    let sites = shift_sites(&model.spec, &circuit, model.circuit_parameters())?;
    let mut grad = Vec::with_capacity(model.parameter_count());
    for (plus, minus) in shifted_states(&circuit, &sites) {
        grad.push(combine_shift(&plus, &minus, &model.plan, &upstream, mode)?);
    }
    for c in 0..dec.classes {
        grad.extend(f.iter().map(|v| dz[c] * v));
    }
    grad.extend(&dz);
    Ok((l, grad))
}

/// Mean loss and accuracy on a subset.
pub fn loss_and_accuracy(model: &QflModel, task: &SyntheticTask, indices: core::ops::Range<usize>, loss: Loss, alpha: [f64; 2]) -> Result<(f64, f64)> {
    let n = indices.len().max(1) as f64;
    let (mut total, mut correct) = (0.0, 0usize);
    for i in indices {
        let z = model.decoder.logits(&features(model, &task.features[i])?);
        total += loss_and_grad(&z, task.labels[i], loss, alpha).0;
        if u8::from(z[1] > z[0]) == task.labels[i] {
            correct += 1;
        }
    }
    Ok((total / n, correct as f64 / n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub split: Split,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome<M> {
    /// Parameters at the best validation loss.
    pub model: M,
    pub history: Vec<EpochMetrics>,
    pub initial_validation_loss: f64,
    pub best_validation_loss: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

/// Minibatch Adam with early stopping on validation loss. Epoch 0 of the history holds the
/// metrics before any update.
pub fn train(task: &SyntheticTask, model: &QflModel, config: &TrainConfig) -> Result<TrainOutcome<QflModel>> {
    config.validate()?;
    if model.spec.num_features() != task.num_features() {
        return Err(Error::Shape("model and task disagree on the feature count".into()));
    }
    let splits = task.splits();
    let alpha = focal_alpha(&task.labels[splits.train.clone()]);
    let mut current = model.clone();
    let mut params = flatten(&current);
    let mut adam = Adam::new(params.len(), config.learning_rate)?;
    let mut order: Vec<usize> = splits.train.clone().collect();
    let mut rng = rng::substream(config.seed, "batches");
    let mut shot_counter = 0u64;

    let mut history = Vec::new();
    let record = |m: &QflModel, epoch: usize, history: &mut Vec<EpochMetrics>| -> Result<f64> {
        let (tl, ta) = loss_and_accuracy(m, task, splits.train.clone(), config.loss, alpha)?;
        let (vl, va) = loss_and_accuracy(m, task, splits.validation.clone(), config.loss, alpha)?;
        history.push(EpochMetrics { epoch, split: Split::Train, loss: tl, accuracy: ta });
        history.push(EpochMetrics { epoch, split: Split::Validation, loss: vl, accuracy: va });
        Ok(vl)
    };
    let initial = record(&current, 0, &mut history)?;
    let (mut best, mut best_epoch, mut best_model) = (initial, 0, current.clone());
    let mut stale = 0;
    let mut epochs_run = 0;
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let mut grad = vec![0.0; params.len()];
            let mut batch_loss = 0.0;
            for &i in batch {
                let mode = match config.shots {
                    None => OutputMode::Exact,
                    Some(n) => {
                        shot_counter += 1;
                        OutputMode::Shots {
                            estimator: ShotEstimator::new(0.1, 0.05)?.with_shots(n),
                            seed: rng::derive_seed(config.seed, "train-shots") ^ shot_counter,
                        }
                    }
                };
                let (l, g) = sample_gradient(&current, &task.features[i], task.labels[i], config.loss, alpha, mode)?;
                batch_loss += l;
                grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b / batch.len() as f64);
            }
            if !batch_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(alloc::format!("epoch {epoch}, batch {b}: loss {batch_loss}")));
            }
            adam.step(&mut params, &grad);
            unflatten(&mut current, &params);
        }
        epochs_run = epoch;
        let vl = record(&current, epoch, &mut history)?;
        if !vl.is_finite() {
            return Err(Error::NonFinite(alloc::format!("epoch {epoch}: validation loss {vl}")));
        }
        if vl < best {
            (best, best_epoch, best_model) = (vl, epoch, current.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                stopped_early = true;
                break;
            }
        }
    }
    Ok(TrainOutcome {
        model: best_model,
        history,
        initial_validation_loss: initial,
        best_validation_loss: best,
        best_epoch,
        epochs_run,
        stopped_early,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub f1: Option<f64>,
    /// `None` when the split holds a single class.
    pub roc_auc: Option<f64>,
}

pub fn accuracy(predictions: &[u8], labels: &[u8]) -> f64 {
    predictions.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / labels.len().max(1) as f64
}

/// F1 of the positive class; `None` when there are neither positives nor positive
/// predictions.
pub fn f1_score(predictions: &[u8], labels: &[u8]) -> Option<f64> {
    let (mut tp, mut fp, mut fneg) = (0, 0, 0);
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p, l) {
            (1, 1) => tp += 1,
            (1, _) => fp += 1,
            (_, 1) => fneg += 1,
            _ => {}
        }
    }
    let denom = 2 * tp + fp + fneg;
    (denom > 0).then(|| 2.0 * tp as f64 / denom as f64)
}

/// Mann–Whitney rank statistic with average ranks for ties.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l == 1).map(|(r, _)| r).sum();
    Some((rank_sum - (pos * (pos + 1)) as f64 / 2.0) / (pos * neg) as f64)
}

pub fn metrics_from_scores(scores: &[f64], labels: &[u8]) -> Metrics {
    let preds: Vec<u8> = scores.iter().map(|&s| u8::from(s > 0.5)).collect();
    Metrics { accuracy: accuracy(&preds, labels), f1: f1_score(&preds, labels), roc_auc: roc_auc(scores, labels) }
}

pub fn evaluate(model: &QflModel, task: &SyntheticTask, indices: core::ops::Range<usize>) -> Result<Metrics> {
    let scores: Vec<f64> = indices.clone().map(|i| predict_proba(model, &task.features[i])).collect::<Result<_>>()?;
    Ok(metrics_from_scores(&scores, &task.labels[indices]))
}

/// CP (low-rank fusion) classifier on the same task: two logits from a [`CpModel`].
pub fn train_cp_classifier(task: &SyntheticTask, rank: usize, granularity: CpGranularity, config: &TrainConfig) -> Result<TrainOutcome<CpModel>> {
    config.validate()?;
    let splits = task.splits();
    let alpha = focal_alpha(&task.labels[splits.train.clone()]);
    let mut model =
        CpModel::random(task.num_modalities, task.feature_dim, rank, 2, granularity, 0.5, &mut rng::substream(config.seed, "cp-init"))?;
    let mut adam = Adam::new(model.params.len(), config.learning_rate)?;
    let mut order: Vec<usize> = splits.train.clone().collect();
    let mut rng = rng::substream(config.seed, "cp-batches");

    let eval = |m: &CpModel, range: core::ops::Range<usize>| -> Result<(f64, f64)> {
        let n = range.len().max(1) as f64;
        let (mut total, mut correct) = (0.0, 0usize);
        for i in range {
            let z = m.predict(&task.features[i])?;
            total += loss_and_grad(&z, task.labels[i], config.loss, alpha).0;
            correct += usize::from(u8::from(z[1] > z[0]) == task.labels[i]);
        }
        Ok((total / n, correct as f64 / n))
    };
    let mut history = Vec::new();
    let mut record = |m: &CpModel, epoch: usize| -> Result<f64> {
        let (tl, ta) = eval(m, splits.train.clone())?;
        let (vl, va) = eval(m, splits.validation.clone())?;
        history.push(EpochMetrics { epoch, split: Split::Train, loss: tl, accuracy: ta });
        history.push(EpochMetrics { epoch, split: Split::Validation, loss: vl, accuracy: va });
        Ok(vl)
    };
    let initial = record(&model, 0)?;
    let (mut best, mut best_epoch, mut best_model) = (initial, 0, model.clone());
    let (mut stale, mut epochs_run, mut stopped_early) = (0, 0, false);
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let mut grad = vec![0.0; model.params.len()];
            for &i in batch {
                let z = model.predict(&task.features[i])?;
                let (l, dz) = loss_and_grad(&z, task.labels[i], config.loss, alpha);
                if !l.is_finite() {
                    return Err(Error::NonFinite(alloc::format!("epoch {epoch}, batch {b}: loss {l}")));
                }
                grad.iter_mut().zip(model.gradient(&task.features[i], &dz)?).for_each(|(a, d)| *a += d / batch.len() as f64);
            }
            adam.step(&mut model.params, &grad);
        }
        epochs_run = epoch;
        let vl = record(&model, epoch)?;
        if vl < best {
            (best, best_epoch, best_model) = (vl, epoch, model.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                stopped_early = true;
                break;
            }
        }
    }
    Ok(TrainOutcome { model: best_model, history, initial_validation_loss: initial, best_validation_loss: best, best_epoch, epochs_run, stopped_early })
}

/// Full-batch logistic regression on the raw features; returns test-split metrics.
pub fn linear_control(task: &SyntheticTask, steps: usize, learning_rate: f64) -> Result<Metrics> {
    let splits = task.splits();
    let n = task.num_features();
    let mut w = vec![0.0; n + 1];
    let mut adam = Adam::new(n + 1, learning_rate)?;
    let score = |w: &[f64], x: &[f64]| w[n] + w[..n].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    let m = splits.train.len() as f64;
    for _ in 0..steps {
        let mut grad = vec![0.0; n + 1];
        for i in splits.train.clone() {
            let p = 1.0 / (1.0 + (-score(&w, &task.features[i])).exp());
            let d = (p - f64::from(task.labels[i])) / m;
            for (g, x) in grad.iter_mut().zip(&task.features[i]) {
                *g += d * x;
            }
            grad[n] += d;
        }
        adam.step(&mut w, &grad);
    }
    let scores: Vec<f64> = splits.test.clone().map(|i| 1.0 / (1.0 + (-score(&w, &task.features[i])).exp())).collect();
    Ok(metrics_from_scores(&scores, &task.labels[splits.test]))
}

/// Describes an unsupported parameter for diagnostics.
pub fn describe_parameter(spec: &QflCircuitSpec, x: &[f64], index: usize) -> Result<String> {
    let circuit = forward_circuit(spec, x)?;
    let site = shift_site(spec, &circuit, index)?;
    Ok(circuit.gates()[site].label())
}
