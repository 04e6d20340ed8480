//! Hardware-efficient parameterized blocks acting on the index register.
//!
//! One unit layer is an entangling block of controlled-Z gates followed by `Rx`, `Ry`,
//! `Rz` on every qubit. Parameters are laid out layer-major, then qubit, then axis
//! (x, y, z).

use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is in the graph
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::gates::{to_matrix, Circuit, Gate};
use crate::linalg::{self, c64, cis, ComplexMatrix, C64};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Entangler {
    /// CZ between neighbours on a ring (a single pair for two qubits).
    #[default]
    Ring,
    /// CZ between every pair.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Uniform on `[-0.1, 0.1]`, close to the identity.
    #[default]
    SmallAngle,
    /// Uniform on `[0, 2π)`.
    FullRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnsatzSpec {
    pub n_qubits: usize,
    pub layers: usize,
    #[serde(default)]
    pub entangler: Entangler,
}

impl AnsatzSpec {
    pub fn new(n_qubits: usize, layers: usize, entangler: Entangler) -> Result<Self> {
        let spec = Self { n_qubits, layers, entangler };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 || self.layers == 0 {
            return Err(Error::Input("an ansatz needs at least one qubit and one layer".into()));
        }
        Ok(())
    }

    /// Parameters per block: `layers · n_qubits · 3`.
    pub fn params_per_block(&self) -> usize {
        self.layers * self.n_qubits * 3
    }

    pub fn coupled_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n_qubits;
        match (self.entangler, n) {
            (_, 0 | 1) => Vec::new(),
            (Entangler::Ring, 2) => alloc::vec![(0, 1)],
            (Entangler::Ring, _) => (0..n).map(|i| (i, (i + 1) % n)).collect(),
            (Entangler::Full, _) => (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect(),
        }
    }
}

/// Flat parameter vector split into equally sized blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub blocks: usize,
    pub per_block: usize,
    pub theta: Vec<f64>,
}

impl ParameterVector {
    pub fn new(blocks: usize, per_block: usize, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != blocks * per_block {
            return Err(Error::Shape(alloc::format!(
                "{blocks} blocks of {per_block} need {} parameters, got {}",
                blocks * per_block,
                theta.len()
            )));
        }
        Ok(Self { blocks, per_block, theta })
    }

    pub fn zeros(blocks: usize, per_block: usize) -> Self {
        Self { blocks, per_block, theta: alloc::vec![0.0; blocks * per_block] }
    }

    pub fn init<R: Rng + ?Sized>(blocks: usize, per_block: usize, mode: InitMode, rng: &mut R) -> Self {
        let theta = (0..blocks * per_block)
            .map(|_| match mode {
                InitMode::SmallAngle => rng.random_range(-0.1..=0.1),
                InitMode::FullRange => rng.random_range(0.0..core::f64::consts::TAU),
            })
            .collect();
        Self { blocks, per_block, theta }
    }

    pub fn block(&self, p: usize) -> &[f64] {
        &self.theta[p * self.per_block..(p + 1) * self.per_block]
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }
}

/// Appends one block to `circuit` on qubits `0..spec.n_qubits`. Rotation gates are tagged
/// with `param_offset + i` for the block's `i`-th parameter.
pub fn append_block(circuit: &mut Circuit, spec: &AnsatzSpec, theta: &[f64], param_offset: usize) -> Result<()> {
    spec.validate()?;
    if theta.len() != spec.params_per_block() {
        return Err(Error::Shape(alloc::format!(
            "block needs {} parameters, got {}",
            spec.params_per_block(),
            theta.len()
        )));
    }
    let pairs = spec.coupled_pairs();
    let mut k = 0;
    for _ in 0..spec.layers {
        for &(a, b) in &pairs {
            circuit.push(Gate::cz(a, b))?;
        }
        for q in 0..spec.n_qubits {
            circuit.push(Gate::rx(q, theta[k]).with_param(param_offset + k))?;
            circuit.push(Gate::ry(q, theta[k + 1]).with_param(param_offset + k + 1))?;
            circuit.push(Gate::rz(q, theta[k + 2]).with_param(param_offset + k + 2))?;
            k += 3;
        }
    }
    Ok(())
}

/// One block on the index register, identity on the trailing value qubit.
pub fn build_block(spec: &AnsatzSpec, theta: &[f64]) -> Result<Circuit> {
    let mut circuit = Circuit::new(spec.n_qubits + 1);
    append_block(&mut circuit, spec, theta, 0)?;
    Ok(circuit)
}

/// `2^n × 2^n` matrix of one block restricted to the index register.
pub fn block_unitary(spec: &AnsatzSpec, theta: &[f64]) -> Result<ComplexMatrix> {
    let mut circuit = Circuit::new(spec.n_qubits);
    append_block(&mut circuit, spec, theta, 0)?;
    to_matrix(&circuit)
}

/// `[[e^{i(θ₁+θ₂)} cos θ₃, e^{iθ₂} sin θ₃], [e^{iθ₁} sin θ₃, −cos θ₃]]`
pub fn build_generic_su2(theta1: f64, theta2: f64, theta3: f64) -> ComplexMatrix {
    let (s, c) = theta3.sin_cos();
    let mut m = ComplexMatrix::zeros(2, 2);
    m.set(0, 0, cis(theta1 + theta2) * c);
    m.set(0, 1, cis(theta2) * s);
    m.set(1, 0, cis(theta1) * s);
    m.set(1, 1, c64(-c, 0.0));
    m
}

/// Divides a unitary by the principal `dim`-th root of its determinant.
pub fn project_to_special_unitary(u: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !u.is_square() {
        return Err(Error::Shape("special-unitary projection needs a square matrix".into()));
    }
    let defect = linalg::unitarity_defect(u);
    if !(defect < 1e-8) {
        return Err(Error::Contract(alloc::format!("matrix is not unitary (defect {defect:e})")));
    }
    let det = linalg::determinant(u)?;
    let n = u.rows() as f64;
    let root = C64::from_polar(det.norm().powf(1.0 / n), det.arg() / n);
    Ok(u.scale(root.inv()))
}

fn trace_power(u: &ComplexMatrix, v: &ComplexMatrix, t: u32) -> f64 {
    // tr(U†V) = Σ conj(U_ij) V_ij
    let tr: C64 = u.data().iter().zip(v.data()).map(|(a, b)| a.conj() * b).sum();
    tr.norm_sqr().powi(t as i32)
}

fn check_moment(t: u32, samples: usize) -> Result<()> {
    if !(1..=2).contains(&t) {
        return Err(Error::Input(alloc::format!("moment order {t} not in {{1, 2}}")));
    }
    if samples < 100 {
        return Err(Error::Input(alloc::format!("{samples} samples < 100")));
    }
    Ok(())
}

/// Monte-Carlo estimate of `E |tr(U†V)|^{2t}` over independent blocks with parameters
/// drawn uniformly in `[0, 2π)`.
pub fn frame_potential_estimate<R: Rng + ?Sized>(
    spec: &AnsatzSpec,
    t: u32,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    check_moment(t, samples)?;
    let k = spec.params_per_block();
    let mut total = 0.0;
    for _ in 0..samples {
        let u = block_unitary(spec, &ParameterVector::init(1, k, InitMode::FullRange, rng).theta)?;
        let v = block_unitary(spec, &ParameterVector::init(1, k, InitMode::FullRange, rng).theta)?;
        total += trace_power(&u, &v, t);
    }
    Ok(total / samples as f64)
}

/// Same statistic for Haar-random unitaries (`t! ` for `dim ≥ t`).
pub fn haar_frame_potential<R: Rng + ?Sized>(dim: usize, t: u32, samples: usize, rng: &mut R) -> Result<f64> {
    check_moment(t, samples)?;
    let mut total = 0.0;
    for _ in 0..samples {
        let u = linalg::haar_unitary(dim, rng);
        let v = linalg::haar_unitary(dim, rng);
        total += trace_power(&u, &v, t);
    }
    Ok(total / samples as f64)
}

/// Frame potential of the zero-variance family `{U}`: `dim^{2t}`.
pub fn fixed_family_frame_potential(u: &ComplexMatrix, t: u32) -> f64 {
    trace_power(u, u, t)
}
