//! Multimodal state preparation `S(x) = |0><0| ⊗ I + Σ_j |j><j| ⊗ R_y(2φ_j)` with
//! `φ_j = arccos(x_j)`, built from one multi-controlled `R_y` per feature.

use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is in the graph
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::gates::{Circuit, Gate};
use crate::{Error, Result};

/// The `M` per-modality feature vectors, each of length `D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityBundle {
    modalities: Vec<Vec<f64>>,
}

impl ModalityBundle {
    pub fn new(modalities: Vec<Vec<f64>>) -> Result<Self> {
        let d = modalities.first().map_or(0, Vec::len);
        if modalities.is_empty() || d == 0 {
            return Err(Error::Input("modality bundle is empty".into()));
        }
        if modalities.iter().any(|z| z.len() != d) {
            return Err(Error::Input("all modalities must share the feature dimension".into()));
        }
        Ok(Self { modalities })
    }

    /// Splits a concatenated vector back into `m` equal modalities.
    pub fn from_concatenated(x: &[f64], m: usize) -> Result<Self> {
        if m == 0 || x.len() % m != 0 {
            return Err(Error::Shape("feature length is not a multiple of the modality count".into()));
        }
        Self::new(x.chunks(x.len() / m).map(<[f64]>::to_vec).collect())
    }

    pub fn num_modalities(&self) -> usize {
        self.modalities.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.modalities[0].len()
    }

    pub fn modalities(&self) -> &[Vec<f64>] {
        &self.modalities
    }
}

/// Modality-major concatenation `[z¹ | z² | … | z^M]`.
pub fn concatenate(bundle: &ModalityBundle) -> Vec<f64> {
    bundle.modalities.iter().flatten().copied().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Elementwise `tanh`.
    #[default]
    Tanh,
    /// Inputs are certified to lie in `[-1, 1]` already.
    PassThrough,
}

pub fn normalize_features(x: &[f64], mode: Normalization) -> Result<Vec<f64>> {
    if let Some(i) = x.iter().position(|v| v.is_nan()) {
        return Err(Error::Input(alloc::format!("feature {i} is NaN")));
    }
    match mode {
        Normalization::Tanh => Ok(x.iter().map(|v| v.tanh()).collect()),
        Normalization::PassThrough => {
            if let Some(i) = x.iter().position(|v| !(-1.0..=1.0).contains(v)) {
                return Err(Error::Input(alloc::format!("feature {i} = {} is outside [-1, 1]", x[i])));
            }
            Ok(x.to_vec())
        }
    }
}

/// Index register wide enough to address `0..=MD`, plus one value qubit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterLayout {
    pub num_features: usize,
    pub n_index: usize,
}

impl RegisterLayout {
    /// `n_index = ceil(log2(MD + 1))`.
    pub fn for_features(num_features: usize) -> Result<Self> {
        if num_features == 0 {
            return Err(Error::Input("at least one feature is required".into()));
        }
        let n_index = (usize::BITS - num_features.leading_zeros()) as usize;
        Ok(Self { num_features, n_index })
    }

    /// `floor(log2(MD + 1))`, the width quoted for the original construction. It is
    /// too narrow whenever `MD + 1` is not a power of two.
    pub fn floor_index_width(num_features: usize) -> usize {
        ((num_features + 1).ilog2()) as usize
    }

    pub fn total_qubits(&self) -> usize {
        self.n_index + 1
    }

    pub fn value_qubit(&self) -> usize {
        self.n_index
    }

    pub fn index_states(&self) -> usize {
        1 << self.n_index
    }
}

/// `φ_j = arccos(x_j)` on the principal branch `[0, π]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleVector(pub Vec<f64>);

impl AngleVector {
    pub fn from_features(x: &[f64]) -> Result<Self> {
        normalize_features(x, Normalization::PassThrough)?;
        Ok(Self(x.iter().map(|v| v.acos()).collect()))
    }
}

/// State preparation for normalised features in `[-1, 1]`.
pub fn build_state_prep(x: &[f64]) -> Result<Circuit> {
    let layout = RegisterLayout::for_features(x.len())?;
    let angles = AngleVector::from_features(x)?;
    build_state_prep_from_angles(&layout, &angles.0)
}

/// State preparation driven directly by angles. Any real `φ_j` is accepted, which is
/// what evaluation on the whole torus needs.
pub fn build_state_prep_from_angles(layout: &RegisterLayout, phis: &[f64]) -> Result<Circuit> {
    if phis.len() != layout.num_features {
        return Err(Error::Shape(alloc::format!(
            "expected {} angles, got {}",
            layout.num_features,
            phis.len()
        )));
    }
    let n = layout.n_index;
    let mut circuit = Circuit::new(layout.total_qubits());
    for (j, &phi) in (1..).zip(phis) {
        let mut gate = Gate::ry(layout.value_qubit(), 2.0 * phi);
        for q in 0..n {
            gate = gate.controlled_by(q, (j >> (n - 1 - q)) & 1 == 1);
        }
        circuit.push(gate)?;
    }
    Ok(circuit)
}

/// `H^{⊗n} ⊗ I`.
pub fn build_hadamard_prefix(layout: &RegisterLayout) -> Circuit {
    let mut circuit = Circuit::new(layout.total_qubits());
    for q in 0..layout.n_index {
        circuit.push(Gate::h(q)).expect("index qubits are in range");
    }
    circuit
}
