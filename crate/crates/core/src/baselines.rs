//! Classical fusion baselines: full tensor-product fusion and CP-format (low-rank)
//! fusion with affine factors.
//!
//! Expansion order is modality-major. The per-modality variant appends the constant slot
//! after each factor (`[z; 1]`, so `[a]⊗[b]` expands to `[ab, a, b, 1]`); the polynomial
//! variant puts it first (`[1; x]`, so `P = 2`, `x = [c]` gives `[1, c, c, c²]`).

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::stateprep::{concatenate, ModalityBundle};
use crate::training::Adam;
use crate::{Error, Result};

/// Largest expanded feature vector the full-fusion baseline will build.
pub const MAX_FUSION_FEATURES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum FusionVariant {
    /// `⊗_m [z^(m); 1]`, length `(D+1)^M`.
    PerModality,
    /// `[1; x]^{⊗P}`, length `(MD+1)^P`.
    Polynomial { order: usize },
}

/// Length of the expanded feature vector.
pub fn fusion_feature_len(num_modalities: usize, feature_dim: usize, variant: FusionVariant) -> Option<usize> {
    match variant {
        FusionVariant::PerModality => (feature_dim + 1).checked_pow(num_modalities as u32),
        FusionVariant::Polynomial { order } => (num_modalities * feature_dim + 1).checked_pow(order as u32),
    }
}

fn kron_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().flat_map(|&x| b.iter().map(move |&y| x * y)).collect()
}

pub fn full_fusion_features(bundle: &ModalityBundle, variant: FusionVariant) -> Result<Vec<f64>> {
    let (m, d) = (bundle.num_modalities(), bundle.feature_dim());
    let len = fusion_feature_len(m, d, variant).unwrap_or(usize::MAX);
    if len > MAX_FUSION_FEATURES {
        return Err(Error::Size { requested: len, limit: MAX_FUSION_FEATURES });
    }
    Ok(match variant {
        FusionVariant::PerModality => bundle.modalities().iter().fold(vec![1.0], |acc, z| {
            let mut f = z.clone();
            f.push(1.0);
            kron_vec(&acc, &f)
        }),
        FusionVariant::Polynomial { order } => {
            let mut f = vec![1.0];
            f.extend(concatenate(bundle));
            (0..order).fold(vec![1.0], |acc, _| kron_vec(&acc, &f))
        }
    })
}

/// `f = Wᵀ X` on the expanded features; `weights` is `features × outputs`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullTensorFusion {
    pub num_modalities: usize,
    pub feature_dim: usize,
    pub variant: FusionVariant,
    pub outputs: usize,
    pub weights: Vec<f64>,
}

impl FullTensorFusion {
    pub fn new(num_modalities: usize, feature_dim: usize, variant: FusionVariant, outputs: usize, weights: Vec<f64>) -> Result<Self> {
        let model = Self { num_modalities, feature_dim, variant, outputs, weights };
        let len = model.feature_len()?;
        if model.weights.len() != len * outputs {
            return Err(Error::Shape(alloc::format!("expected {} weights, got {}", len * outputs, model.weights.len())));
        }
        Ok(model)
    }

    pub fn zeros(num_modalities: usize, feature_dim: usize, variant: FusionVariant, outputs: usize) -> Result<Self> {
        let len = fusion_feature_len(num_modalities, feature_dim, variant).unwrap_or(usize::MAX);
        if len > MAX_FUSION_FEATURES {
            return Err(Error::Size { requested: len, limit: MAX_FUSION_FEATURES });
        }
        Self::new(num_modalities, feature_dim, variant, outputs, vec![0.0; len * outputs])
    }

    pub fn feature_len(&self) -> Result<usize> {
        let len = fusion_feature_len(self.num_modalities, self.feature_dim, self.variant).unwrap_or(usize::MAX);
        if len > MAX_FUSION_FEATURES {
            return Err(Error::Size { requested: len, limit: MAX_FUSION_FEATURES });
        }
        Ok(len)
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len()
    }
}

pub fn full_fusion_predict(model: &FullTensorFusion, bundle: &ModalityBundle) -> Result<Vec<f64>> {
    if bundle.num_modalities() != model.num_modalities || bundle.feature_dim() != model.feature_dim {
        return Err(Error::Shape("bundle does not match the fusion model".into()));
    }
    let x = full_fusion_features(bundle, model.variant)?;
    let h = model.outputs;
    let mut f = vec![0.0; h];
    for (k, &xk) in x.iter().enumerate() {
        for (o, fo) in f.iter_mut().enumerate() {
            *fo += model.weights[k * h + o] * xk;
        }
    }
    Ok(f)
}

/// How the CP factors group the input scalars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CpGranularity {
    /// One univariate factor per scalar feature (`M·D` groups of size 1).
    #[default]
    PerScalar,
    /// One affine factor per modality (`M` groups of size `D`), as in low-rank fusion.
    PerModality,
}

/// `f_h = Σ_α Π_g (a_{α,h,g}·z_g + b_{α,h,g})`.
///
/// Parameters are stored rank-major, then output, then group; each group contributes its
/// `|g|` weights followed by one bias. Count: `R·H·Σ_g(|g| + 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpModel {
    pub num_modalities: usize,
    pub feature_dim: usize,
    pub rank: usize,
    pub outputs: usize,
    #[serde(default)]
    pub granularity: CpGranularity,
    pub params: Vec<f64>,
}

impl CpModel {
    pub fn new(num_modalities: usize, feature_dim: usize, rank: usize, outputs: usize, granularity: CpGranularity, params: Vec<f64>) -> Result<Self> {
        if num_modalities == 0 || feature_dim == 0 || rank == 0 || outputs == 0 {
            return Err(Error::Input("CP model dimensions must be positive".into()));
        }
        let model = Self { num_modalities, feature_dim, rank, outputs, granularity, params };
        if model.params.len() != model.parameter_count() {
            return Err(Error::Shape(alloc::format!("expected {} CP parameters, got {}", model.parameter_count(), model.params.len())));
        }
        Ok(model)
    }

    /// Random factors with entries `N(0, scale²)`.
    pub fn random<R: Rng + ?Sized>(
        num_modalities: usize,
        feature_dim: usize,
        rank: usize,
        outputs: usize,
        granularity: CpGranularity,
        scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let n = rank * outputs * group_param_total(num_modalities, feature_dim, granularity);
        let params = (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
        Self::new(num_modalities, feature_dim, rank, outputs, granularity, params)
    }

    /// All factors `≡ 1`: weights 0, biases 1.
    pub fn ones(num_modalities: usize, feature_dim: usize, rank: usize, outputs: usize, granularity: CpGranularity) -> Result<Self> {
        let mut model = Self::new(
            num_modalities,
            feature_dim,
            rank,
            outputs,
            granularity,
            vec![0.0; rank * outputs * group_param_total(num_modalities, feature_dim, granularity)],
        )?;
        let g = model.group_size();
        model.params.chunks_mut(g + 1).for_each(|c| c[g] = 1.0);
        Ok(model)
    }

    pub fn num_groups(&self) -> usize {
        match self.granularity {
            CpGranularity::PerScalar => self.num_modalities * self.feature_dim,
            CpGranularity::PerModality => self.num_modalities,
        }
    }

    pub fn group_size(&self) -> usize {
        match self.granularity {
            CpGranularity::PerScalar => 1,
            CpGranularity::PerModality => self.feature_dim,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.rank * self.outputs * group_param_total(self.num_modalities, self.feature_dim, self.granularity)
    }

    fn offset(&self, alpha: usize, h: usize, g: usize) -> usize {
        let per_group = self.group_size() + 1;
        ((alpha * self.outputs + h) * self.num_groups() + g) * per_group
    }

    fn factor(&self, alpha: usize, h: usize, g: usize, x: &[f64]) -> f64 {
        let s = self.group_size();
        let p = &self.params[self.offset(alpha, h, g)..][..s + 1];
        let z = &x[g * s..][..s];
        p[s] + p[..s].iter().zip(z).map(|(a, b)| a * b).sum::<f64>()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.num_modalities * self.feature_dim {
            return Err(Error::Shape(alloc::format!("CP model expects {} inputs, got {}", self.num_modalities * self.feature_dim, x.len())));
        }
        Ok(())
    }

    /// Prediction from the concatenated feature vector.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok((0..self.outputs)
            .map(|h| (0..self.rank).map(|a| (0..self.num_groups()).map(|g| self.factor(a, h, g, x)).product::<f64>()).sum())
            .collect())
    }

    /// `Σ_h upstream_h · ∂f_h/∂params`.
    pub fn gradient(&self, x: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        if upstream.len() != self.outputs {
            return Err(Error::Shape("upstream gradient length".into()));
        }
        let (groups, s) = (self.num_groups(), self.group_size());
        let mut grad = vec![0.0; self.params.len()];
        let mut vals = vec![0.0; groups];
        for (h, &u) in upstream.iter().enumerate() {
            for a in 0..self.rank {
                for (g, v) in vals.iter_mut().enumerate() {
                    *v = self.factor(a, h, g, x);
                }
                for g in 0..groups {
                    let others: f64 = vals.iter().enumerate().filter(|&(k, _)| k != g).map(|(_, v)| v).product();
                    let off = self.offset(a, h, g);
                    for i in 0..s {
                        grad[off + i] += u * others * x[g * s + i];
                    }
                    grad[off + s] += u * others;
                }
            }
        }
        Ok(grad)
    }
}

fn group_param_total(num_modalities: usize, feature_dim: usize, granularity: CpGranularity) -> usize {
    match granularity {
        CpGranularity::PerScalar => num_modalities * feature_dim * 2,
        CpGranularity::PerModality => num_modalities * (feature_dim + 1),
    }
}

pub fn cp_predict(model: &CpModel, bundle: &ModalityBundle) -> Result<Vec<f64>> {
    if bundle.num_modalities() != model.num_modalities || bundle.feature_dim() != model.feature_dim {
        return Err(Error::Shape("bundle does not match the CP model".into()));
    }
    model.predict(&concatenate(bundle))
}

/// Either baseline, for uniform parameter accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Baseline {
    Full(FullTensorFusion),
    Cp(CpModel),
}

pub fn parameter_count(model: &Baseline) -> usize {
    match model {
        Baseline::Full(m) => m.parameter_count(),
        Baseline::Cp(m) => m.parameter_count(),
    }
}

/// Alternating least squares on squared error. Each sweep re-solves every group's
/// affine coefficients exactly with the other groups frozen.
pub fn fit_cp_als(model: &mut CpModel, inputs: &[Vec<f64>], targets: &[Vec<f64>], sweeps: usize, ridge: f64) -> Result<f64> {
    if inputs.len() != targets.len() || inputs.is_empty() {
        return Err(Error::Shape("inputs and targets must be non-empty and paired".into()));
    }
    for (x, y) in inputs.iter().zip(targets) {
        model.check_input(x)?;
        if y.len() != model.outputs {
            return Err(Error::Shape("target length differs from the model outputs".into()));
        }
    }
    let (groups, s, rank) = (model.num_groups(), model.group_size(), model.rank);
    let cols = rank * (s + 1);
    for _ in 0..sweeps {
        for h in 0..model.outputs {
            for g in 0..groups {
                let mut a = Vec::with_capacity(inputs.len() * cols);
                for x in inputs {
                    for alpha in 0..rank {
                        let others: f64 = (0..groups).filter(|&k| k != g).map(|k| model.factor(alpha, h, k, x)).product();
                        a.extend(x[g * s..][..s].iter().map(|z| z * others));
                        a.push(others);
                    }
                }
                let b: Vec<f64> = targets.iter().map(|y| y[h]).collect();
                let sol = linalg::real_least_squares(&a, cols, &b, ridge)?;
                for alpha in 0..rank {
                    let off = model.offset(alpha, h, g);
                    model.params[off..off + s + 1].copy_from_slice(&sol[alpha * (s + 1)..][..s + 1]);
                }
            }
        }
    }
    mean_squared_error(model, inputs, targets)
}

pub fn mean_squared_error(model: &CpModel, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    let mut total = 0.0;
    for (x, y) in inputs.iter().zip(targets) {
        total += model.predict(x)?.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>();
    }
    Ok(total / inputs.len() as f64)
}

pub fn max_abs_error(model: &CpModel, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (x, y) in inputs.iter().zip(targets) {
        for (p, t) in model.predict(x)?.iter().zip(y) {
            worst = worst.max((p - t).abs());
        }
    }
    Ok(worst)
}

/// Full-batch Adam on mean squared error; returns the final loss.
pub fn train_cp_mse(model: &mut CpModel, inputs: &[Vec<f64>], targets: &[Vec<f64>], steps: usize, learning_rate: f64) -> Result<f64> {
    if inputs.len() != targets.len() || inputs.is_empty() {
        return Err(Error::Shape("inputs and targets must be non-empty and paired".into()));
    }
    let mut adam = Adam::new(model.params.len(), learning_rate)?;
    let scale = 2.0 / inputs.len() as f64;
    for _ in 0..steps {
        let mut grad = vec![0.0; model.params.len()];
        for (x, y) in inputs.iter().zip(targets) {
            let upstream: Vec<f64> = model.predict(x)?.iter().zip(y).map(|(p, t)| scale * (p - t)).collect();
            for (g, d) in grad.iter_mut().zip(model.gradient(x, &upstream)?) {
                *g += d;
            }
        }
        adam.step(&mut model.params, &grad);
    }
    mean_squared_error(model, inputs, targets)
}
