//! The interleaved circuit `F_P(x) = U₀ S(x) U₁ ⋯ S(x) U_P`, its restriction to the
//! invariant subspace `H₊ = span{|j>|v₊>}`, and read-out of the realised matrix
//! polynomial in the torus variables `t_j = e^{iφ_j}`.
//!
//! On `H₊` the state preparation acts as `diag(1, t₁, …, t_MD)`, so every entry of the
//! restricted `F_P` is a polynomial with non-negative exponents and total degree at most
//! `P`. Extraction samples the entry on the grid `φ_j ∈ {2πk/(P+1)}` and inverts the
//! multidimensional DFT, which is exact for that support; off-grid probes catch anything
//! the grid would alias.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_1_SQRT_2, TAU};

#[allow(unused_imports)] // shadowed by inherent methods when std is in the graph
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ansatz::{self, AnsatzSpec, ParameterVector};
use crate::gates::{to_matrix, Circuit, Gate};
use crate::linalg::{self, c64, cis, ComplexMatrix, C64, I, ONE, ZERO};
use crate::rng;
use crate::stateprep::{self, AngleVector, RegisterLayout};
use crate::{Error, Result};

/// Coefficients below this modulus are treated as zero.
pub const ZERO_THRESHOLD: f64 = 1e-8;

/// Where the `P + 1` parameterized blocks come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum BlockSet {
    /// Hardware-efficient blocks sharing one spec; parameters split per block.
    Ansatz { spec: AnsatzSpec, params: ParameterVector },
    /// Explicit index-register unitaries (`2^n_index` square), used as given.
    Fixed { unitaries: Vec<ComplexMatrix> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QflCircuitSpec {
    pub depth: usize,
    pub layout: RegisterLayout,
    pub blocks: BlockSet,
    /// Project ansatz blocks onto the special unitary group before use.
    #[serde(default)]
    pub su_normalized: bool,
}

impl QflCircuitSpec {
    pub fn new(depth: usize, layout: RegisterLayout, blocks: BlockSet, su_normalized: bool) -> Result<Self> {
        let spec = Self { depth, layout, blocks, su_normalized };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_ansatz(depth: usize, layout: RegisterLayout, ansatz: AnsatzSpec, params: ParameterVector) -> Result<Self> {
        Self::new(depth, layout, BlockSet::Ansatz { spec: ansatz, params }, false)
    }

    pub fn validate(&self) -> Result<()> {
        let blocks = self.depth + 1;
        match &self.blocks {
            BlockSet::Ansatz { spec, params } => {
                spec.validate()?;
                if spec.n_qubits != self.layout.n_index {
                    return Err(Error::Shape(alloc::format!(
                        "ansatz acts on {} qubits but the index register has {}",
                        spec.n_qubits,
                        self.layout.n_index
                    )));
                }
                if params.blocks != blocks || params.per_block != spec.params_per_block() || params.len() != blocks * params.per_block {
                    return Err(Error::Shape(alloc::format!(
                        "parameters must split into {blocks} blocks of {}",
                        spec.params_per_block()
                    )));
                }
            }
            BlockSet::Fixed { unitaries } => {
                if unitaries.len() != blocks {
                    return Err(Error::Shape(alloc::format!("{} fixed blocks for depth {}", unitaries.len(), self.depth)));
                }
                let dim = self.layout.index_states();
                if unitaries.iter().any(|u| u.rows() != dim || u.cols() != dim) {
                    return Err(Error::Shape(alloc::format!("fixed blocks must be {dim}x{dim}")));
                }
            }
        }
        Ok(())
    }

    pub fn num_features(&self) -> usize {
        self.layout.num_features
    }

    pub fn total_qubits(&self) -> usize {
        self.layout.total_qubits()
    }

    /// Circuit of block `p` on the full register (identity on the value qubit).
    pub fn block_circuit(&self, p: usize) -> Result<Circuit> {
        let mut circuit = Circuit::new(self.total_qubits());
        let index_qubits: Vec<usize> = (0..self.layout.n_index).collect();
        match &self.blocks {
            BlockSet::Ansatz { spec, params } if self.su_normalized => {
                let u = ansatz::project_to_special_unitary(&ansatz::block_unitary(spec, params.block(p))?)?;
                circuit.push(Gate::unitary(u, index_qubits)?)?;
            }
            BlockSet::Ansatz { spec, params } => {
                ansatz::append_block(&mut circuit, spec, params.block(p), p * params.per_block)?;
            }
            BlockSet::Fixed { unitaries } => {
                circuit.push(Gate::unitary(unitaries[p].clone(), index_qubits)?)?;
            }
        }
        Ok(circuit)
    }

    /// Index-register matrix of block `p`.
    pub fn block_unitary(&self, p: usize) -> Result<ComplexMatrix> {
        match &self.blocks {
            BlockSet::Ansatz { spec, params } => {
                let u = ansatz::block_unitary(spec, params.block(p))?;
                if self.su_normalized {
                    ansatz::project_to_special_unitary(&u)
                } else {
                    Ok(u)
                }
            }
            BlockSet::Fixed { unitaries } => Ok(unitaries[p].clone()),
        }
    }

    /// Dimension of the invariant subspace this spec is analysed on: `MD + 1` when every
    /// block keeps `span{|0>, …, |MD>}` invariant, otherwise the whole index space.
    pub fn invariant_dim(&self) -> Result<usize> {
        let small = self.num_features() + 1;
        let full = self.layout.index_states();
        if small == full {
            return Ok(full);
        }
        for p in 0..=self.depth {
            let u = self.block_unitary(p)?;
            let leaks = (small..full).any(|r| (0..small).any(|c| u.get(r, c).norm() > 1e-12));
            if leaks {
                return Ok(full);
            }
        }
        Ok(small)
    }

    pub fn subspace(&self) -> Result<InvariantSubspace> {
        Ok(InvariantSubspace::new(self.layout.n_index, self.invariant_dim()?))
    }
}

/// Ordered product with `P` copies of `S(x)`; `x` must be normalised features.
pub fn assemble(spec: &QflCircuitSpec, x: &[f64]) -> Result<Circuit> {
    if x.len() != spec.num_features() {
        return Err(Error::Shape(alloc::format!("expected {} features, got {}", spec.num_features(), x.len())));
    }
    let angles = AngleVector::from_features(x)?;
    assemble_from_angles(spec, &angles.0)
}

/// As [`assemble`] but with the angles `φ_j` supplied directly.
pub fn assemble_from_angles(spec: &QflCircuitSpec, phis: &[f64]) -> Result<Circuit> {
    spec.validate()?;
    let prep = stateprep::build_state_prep_from_angles(&spec.layout, phis)?;
    let mut circuit = Circuit::new(spec.total_qubits());
    // Matrix U₀ S U₁ ⋯ S U_P: U_P runs first.
    for p in (0..=spec.depth).rev() {
        circuit.append(&spec.block_circuit(p)?)?;
        if p > 0 {
            circuit.append(&prep)?;
        }
    }
    Ok(circuit)
}

/// Full `2(MD+1)`-ish matrix of `F_P` at the given angles.
pub fn full_matrix(spec: &QflCircuitSpec, phis: &[f64]) -> Result<ComplexMatrix> {
    to_matrix(&assemble_from_angles(spec, phis)?)
}

/// `span{|j>|v₊>}` for `j < dim`, with `|v₊> = (|0> − i|1>)/√2`.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantSubspace {
    n_index: usize,
    isometry: ComplexMatrix,
}

impl InvariantSubspace {
    pub fn new(n_index: usize, dim: usize) -> Self {
        let rows = 2usize << n_index;
        let mut v = ComplexMatrix::zeros(rows, dim);
        for j in 0..dim {
            v.set(2 * j, j, c64(FRAC_1_SQRT_2, 0.0));
            v.set(2 * j + 1, j, -I * FRAC_1_SQRT_2);
        }
        Self { n_index, isometry: v }
    }

    pub fn dim(&self) -> usize {
        self.isometry.cols()
    }

    pub fn isometry(&self) -> &ComplexMatrix {
        &self.isometry
    }
}

/// `V† M V`, failing if `M` moves part of the subspace out of it.
pub fn restrict(matrix: &ComplexMatrix, subspace: &InvariantSubspace) -> Result<ComplexMatrix> {
    let v = &subspace.isometry;
    if matrix.rows() != v.rows() || matrix.cols() != v.rows() {
        return Err(Error::Shape(alloc::format!(
            "{}x{} operator on a {}-dimensional register",
            matrix.rows(),
            matrix.cols(),
            v.rows()
        )));
    }
    let mv = linalg::matmul(matrix, v)?;
    let restricted = linalg::matmul(&v.adjoint(), &mv)?;
    let back = linalg::matmul(v, &restricted)?;
    let leakage = mv.data().iter().zip(back.data()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    if leakage > 1e-8 {
        return Err(Error::InvarianceViolation { leakage });
    }
    Ok(restricted)
}

/// Restricted `F_P` at the given angles.
pub fn restricted_matrix(spec: &QflCircuitSpec, subspace: &InvariantSubspace, phis: &[f64]) -> Result<ComplexMatrix> {
    restrict(&full_matrix(spec, phis)?, subspace)
}

/// Sparse polynomial in `t_1 … t_n` with complex coefficients.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(into = "PolynomialRepr", from = "PolynomialRepr")]
pub struct MultivariatePolynomial {
    num_vars: usize,
    terms: BTreeMap<Vec<u32>, C64>,
}

#[derive(Serialize, Deserialize)]
struct PolynomialRepr {
    num_vars: usize,
    terms: Vec<TermRepr>,
}

#[derive(Serialize, Deserialize)]
struct TermRepr {
    exponents: Vec<u32>,
    re: f64,
    im: f64,
}

impl From<MultivariatePolynomial> for PolynomialRepr {
    fn from(p: MultivariatePolynomial) -> Self {
        PolynomialRepr {
            num_vars: p.num_vars,
            terms: p.terms.into_iter().map(|(exponents, c)| TermRepr { exponents, re: c.re, im: c.im }).collect(),
        }
    }
}

impl From<PolynomialRepr> for MultivariatePolynomial {
    fn from(r: PolynomialRepr) -> Self {
        let mut p = MultivariatePolynomial::zero(r.num_vars);
        for t in r.terms {
            p.add_term(&t.exponents, c64(t.re, t.im));
        }
        p
    }
}

impl MultivariatePolynomial {
    pub fn zero(num_vars: usize) -> Self {
        Self { num_vars, terms: BTreeMap::new() }
    }

    pub fn constant(num_vars: usize, c: C64) -> Self {
        let mut p = Self::zero(num_vars);
        p.add_term(&vec![0; num_vars], c);
        p
    }

    /// `t_j` (0-based variable index).
    pub fn variable(num_vars: usize, j: usize) -> Self {
        let mut e = vec![0; num_vars];
        e[j] = 1;
        let mut p = Self::zero(num_vars);
        p.add_term(&e, ONE);
        p
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn add_term(&mut self, exponents: &[u32], c: C64) {
        assert_eq!(exponents.len(), self.num_vars, "exponent vector length");
        *self.terms.entry(exponents.to_vec()).or_insert(ZERO) += c;
    }

    pub fn coefficient(&self, exponents: &[u32]) -> C64 {
        self.terms.get(exponents).copied().unwrap_or(ZERO)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32], C64)> {
        self.terms.iter().map(|(e, c)| (e.as_slice(), *c))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Drops terms whose coefficient modulus is below `threshold`.
    pub fn prune(&mut self, threshold: f64) {
        self.terms.retain(|_, c| c.norm() >= threshold);
    }

    /// Largest exponent sum; zero for the zero polynomial.
    pub fn total_degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    /// Exponent vectors carrying a coefficient of modulus at least `threshold`.
    pub fn support(&self, threshold: f64) -> Vec<Vec<u32>> {
        self.terms.iter().filter(|(_, c)| c.norm() >= threshold).map(|(e, _)| e.clone()).collect()
    }

    pub fn evaluate(&self, t: &[C64]) -> C64 {
        self.terms
            .iter()
            .map(|(e, &c)| e.iter().zip(t).fold(c, |acc, (&k, &tj)| acc * tj.powu(k)))
            .sum()
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (e, &c) in &other.terms {
            out.add_term(e, c);
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.num_vars);
        for (ea, &ca) in &self.terms {
            for (eb, &cb) in &other.terms {
                let e: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(&e, ca * cb);
            }
        }
        out
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { num_vars: self.num_vars, terms: self.terms.iter().map(|(e, &c)| (e.clone(), c * s)).collect() }
    }
}

/// Matrix whose entries are polynomials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixPolynomial {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<MultivariatePolynomial>,
}

impl MatrixPolynomial {
    pub fn from_constant(m: &ComplexMatrix, num_vars: usize) -> Self {
        Self {
            rows: m.rows(),
            cols: m.cols(),
            entries: m.data().iter().map(|&c| MultivariatePolynomial::constant(num_vars, c)).collect(),
        }
    }

    /// `diag(1, t₁, …, t_n, 1, …)` of size `dim`; indices past `n` are constant 1.
    pub fn state_prep_diagonal(num_vars: usize, dim: usize) -> Self {
        let mut entries = vec![MultivariatePolynomial::zero(num_vars); dim * dim];
        for j in 0..dim {
            entries[j * dim + j] = if (1..=num_vars).contains(&j) {
                MultivariatePolynomial::variable(num_vars, j - 1)
            } else {
                MultivariatePolynomial::constant(num_vars, ONE)
            };
        }
        Self { rows: dim, cols: dim, entries }
    }

    pub fn entry(&self, r: usize, c: usize) -> &MultivariatePolynomial {
        &self.entries[r * self.cols + c]
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Shape("matrix polynomial product".into()));
        }
        let nv = self.entries.first().map_or(0, |p| p.num_vars);
        let mut entries = Vec::with_capacity(self.rows * other.cols);
        for r in 0..self.rows {
            for c in 0..other.cols {
                let mut acc = MultivariatePolynomial::zero(nv);
                for k in 0..self.cols {
                    acc = acc.add(&self.entry(r, k).mul(other.entry(k, c)));
                }
                entries.push(acc);
            }
        }
        Ok(Self { rows: self.rows, cols: other.cols, entries })
    }

    pub fn prune(&mut self, threshold: f64) {
        self.entries.iter_mut().for_each(|p| p.prune(threshold));
    }

    pub fn evaluate(&self, t: &[C64]) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.rows, self.cols, |r, c| self.entry(r, c).evaluate(t))
    }

    pub fn total_degree(&self) -> u32 {
        self.entries.iter().map(MultivariatePolynomial::total_degree).max().unwrap_or(0)
    }
}

/// Knobs for polynomial extraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractionOptions {
    /// Cap on `MD · (P+1)^MD` circuit evaluations.
    pub max_evaluations: usize,
    pub probes: usize,
    pub probe_seed: u64,
    pub zero_threshold: f64,
    pub residual_tolerance: f64,
}

impl Default for ExtractionOptions {
    fn default() -> Self {
        Self { max_evaluations: 1 << 14, probes: 16, probe_seed: 0x5eed, zero_threshold: ZERO_THRESHOLD, residual_tolerance: 1e-7 }
    }
}

fn grid_angles(flat: usize, n: usize, g: usize) -> Vec<f64> {
    (0..n).map(|j| TAU * ((flat / g.pow((n - 1 - j) as u32)) % g) as f64 / g as f64).collect()
}

/// Entry-by-entry polynomial of the restricted `F_P`.
pub fn extract_matrix_polynomial(spec: &QflCircuitSpec, options: &ExtractionOptions) -> Result<MatrixPolynomial> {
    let subspace = spec.subspace()?;
    extract_on_subspace(spec, &subspace, options)
}

pub fn extract_on_subspace(spec: &QflCircuitSpec, subspace: &InvariantSubspace, options: &ExtractionOptions) -> Result<MatrixPolynomial> {
    let n = spec.num_features();
    let g = spec.depth + 1;
    let points = g.checked_pow(n as u32).unwrap_or(usize::MAX);
    let budget = points.saturating_mul(n);
    if budget > options.max_evaluations {
        return Err(Error::Size { requested: budget, limit: options.max_evaluations });
    }
    let dim = subspace.dim();

    let samples: Vec<ComplexMatrix> =
        (0..points).map(|flat| restricted_matrix(spec, subspace, &grid_angles(flat, n, g))).collect::<Result<_>>()?;

    // ω^{-ak} table
    let roots: Vec<C64> = (0..g).map(|k| cis(-TAU * k as f64 / g as f64)).collect();
    let mut entries = Vec::with_capacity(dim * dim);
    let mut buf = vec![ZERO; points];
    let mut line = vec![ZERO; g];
    for e in 0..dim * dim {
        for (b, s) in buf.iter_mut().zip(&samples) {
            *b = s.data()[e];
        }
        // separable inverse DFT, one variable at a time
        for axis in 0..n {
            let stride = g.pow((n - 1 - axis) as u32);
            for start in 0..points {
                if (start / stride) % g != 0 {
                    continue;
                }
                for (k, l) in line.iter_mut().enumerate() {
                    *l = buf[start + k * stride];
                }
                for a in 0..g {
                    let s: C64 = (0..g).map(|k| line[k] * roots[(a * k) % g]).sum();
                    buf[start + a * stride] = s / g as f64;
                }
            }
        }
        let mut poly = MultivariatePolynomial::zero(n);
        for (flat, &c) in buf.iter().enumerate() {
            if c.norm() >= options.zero_threshold {
                let exps: Vec<u32> = (0..n).map(|j| ((flat / g.pow((n - 1 - j) as u32)) % g) as u32).collect();
                poly.add_term(&exps, c);
            }
        }
        entries.push(poly);
    }
    let poly = MatrixPolynomial { rows: dim, cols: dim, entries };

    let mut rng = rng::substream(options.probe_seed, "extraction-probes");
    let mut residual: f64 = 0.0;
    for _ in 0..options.probes {
        let phis: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..TAU)).collect();
        let t: Vec<C64> = phis.iter().map(|&p| cis(p)).collect();
        let direct = restricted_matrix(spec, subspace, &phis)?;
        residual = residual.max(direct.max_abs_diff(&poly.evaluate(&t)));
    }
    if residual > options.residual_tolerance {
        return Err(Error::DegreeOverflow { residual });
    }
    Ok(poly)
}

/// Polynomial of one entry `(row, col)` of the restricted `F_P`.
pub fn extract_polynomial(spec: &QflCircuitSpec, entry: (usize, usize), options: &ExtractionOptions) -> Result<MultivariatePolynomial> {
    let m = extract_matrix_polynomial(spec, options)?;
    if entry.0 >= m.rows || entry.1 >= m.cols {
        return Err(Error::Shape(alloc::format!("entry {entry:?} outside a {}x{} matrix", m.rows, m.cols)));
    }
    Ok(m.entry(entry.0, entry.1).clone())
}

/// Embeds a `k × k` unitary into the `dim`-dimensional index space on basis states
/// `offset .. offset + k`, identity elsewhere.
pub fn embed_block(u: &ComplexMatrix, dim: usize, offset: usize) -> ComplexMatrix {
    let mut out = ComplexMatrix::identity(dim);
    for r in 0..u.rows() {
        for c in 0..u.cols() {
            out.set(offset + r, offset + c, u.get(r, c));
        }
    }
    out
}

/// Spec of the two-variable toy example: `MD = 2`, `P = 2`, generic single-qubit blocks
/// acting on index states `{|1>, |2>}`, so the `{1,2}` corner of the restricted circuit is
/// `U₀ diag(t₁,t₂) U₁ diag(t₁,t₂) U₂`.
pub fn toy_example_spec(thetas: &[[f64; 3]; 3]) -> Result<QflCircuitSpec> {
    let layout = RegisterLayout::for_features(2)?;
    let unitaries = thetas
        .iter()
        .map(|&[a, b, c]| embed_block(&ansatz::build_generic_su2(a, b, c), layout.index_states(), 1))
        .collect();
    QflCircuitSpec::new(2, layout, BlockSet::Fixed { unitaries }, false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub trial_seed: u64,
    pub max_degree: u32,
    pub max_unitarity_defect: f64,
    pub max_det_error: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub num_features: usize,
    pub depth: usize,
    pub negative_control: bool,
    pub trials: Vec<TrialResult>,
    pub all_pass: bool,
}

/// Thresholds for the expressivity verifier.
pub const UNITARITY_TOLERANCE: f64 = 1e-9;
pub const DETERMINANT_TOLERANCE: f64 = 1e-8;
pub const TORUS_CHECK_POINTS: usize = 50;

/// Random special-unitary blocks on `span{|0>..|MD>}`, embedded in the index space.
pub fn random_su_blocks<R: Rng + ?Sized>(layout: &RegisterLayout, depth: usize, rng: &mut R) -> Result<Vec<ComplexMatrix>> {
    let k = layout.num_features + 1;
    (0..=depth)
        .map(|_| {
            let su = ansatz::project_to_special_unitary(&linalg::haar_unitary(k, rng))?;
            Ok(embed_block(&su, layout.index_states(), 0))
        })
        .collect()
}

/// Seed of trial `i` under `seed`.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    rng::derive_seed(seed, &alloc::format!("theorem1/{trial}"))
}

/// One expressivity trial: random SU blocks, degree bound, unitarity and determinant.
pub fn verify_theorem1_trial(num_features: usize, depth: usize, trial: usize, seed: u64, negative_control: bool) -> Result<TrialResult> {
    let layout = RegisterLayout::for_features(num_features)?;
    let mut rng = rng::substream(seed, "theorem1-trial");
    let mut blocks = random_su_blocks(&layout, depth, &mut rng)?;
    if negative_control {
        // a global phase on U₀'s active block leaves unitarity intact but breaks det = 1
        let phase = cis(0.3);
        for r in 0..=num_features {
            for c in 0..=num_features {
                let v = blocks[0].get(r, c);
                blocks[0].set(r, c, v * phase);
            }
        }
    }
    let spec = QflCircuitSpec::new(depth, layout, BlockSet::Fixed { unitaries: blocks }, true)?;

    let mut failure = None;
    let options = ExtractionOptions { probe_seed: seed, ..ExtractionOptions::default() };
    let max_degree = match extract_matrix_polynomial(&spec, &options) {
        Ok(poly) => poly.total_degree(),
        Err(e) => {
            failure = Some(alloc::format!("{e}"));
            u32::MAX
        }
    };
    let mut max_unitarity_defect: f64 = 0.0;
    let mut max_det_error: f64 = 0.0;
    for _ in 0..TORUS_CHECK_POINTS {
        let phis: Vec<f64> = (0..num_features).map(|_| rng.random_range(0.0..TAU)).collect();
        let f = full_matrix(&spec, &phis)?;
        max_unitarity_defect = max_unitarity_defect.max(linalg::unitarity_defect(&f));
        max_det_error = max_det_error.max((linalg::determinant(&f)? - ONE).norm());
    }
    if failure.is_none() {
        if max_degree as usize > depth {
            failure = Some(alloc::format!("total degree {max_degree} exceeds {depth}"));
        } else if !(max_unitarity_defect < UNITARITY_TOLERANCE) {
            failure = Some(alloc::format!("unitarity defect {max_unitarity_defect:e}"));
        } else if !(max_det_error < DETERMINANT_TOLERANCE) {
            failure = Some(alloc::format!("|det - 1| = {max_det_error:e}"));
        }
    }
    Ok(TrialResult { trial, trial_seed: seed, max_degree, max_unitarity_defect, max_det_error, pass: failure.is_none(), failure })
}

/// Runs `trials` independent expressivity trials.
pub fn verify_theorem1(num_features: usize, depth: usize, trials: usize, seed: u64, negative_control: bool) -> Result<Theorem1Report> {
    let results: Vec<TrialResult> = (0..trials)
        .map(|i| verify_theorem1_trial(num_features, depth, i, trial_seed(seed, i), negative_control))
        .collect::<Result<_>>()?;
    let all_pass = results.iter().all(|r| r.pass);
    Ok(Theorem1Report { num_features, depth, negative_control, trials: results, all_pass })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    pub theta1: f64,
    pub theta2: f64,
    pub value: C64,
}

/// Restricted entry over `(θ₁, θ₂) ∈ [0, 2π]²` with `t_j = e^{iθ_j}`; both endpoints are
/// included, `θ₁` is the slow index.
pub fn torus_scan(spec: &QflCircuitSpec, entry: (usize, usize), resolution: usize) -> Result<Vec<TorusPoint>> {
    if spec.num_features() != 2 {
        return Err(Error::Input(alloc::format!("torus scan needs two features, got {}", spec.num_features())));
    }
    if resolution < 2 {
        return Err(Error::Input("resolution must be at least 2".into()));
    }
    let subspace = spec.subspace()?;
    if entry.0 >= subspace.dim() || entry.1 >= subspace.dim() {
        return Err(Error::Shape(alloc::format!("entry {entry:?} outside the {}-dimensional subspace", subspace.dim())));
    }
    let step = TAU / (resolution - 1) as f64;
    let mut out = Vec::with_capacity(resolution * resolution);
    for a in 0..resolution {
        for b in 0..resolution {
            let (theta1, theta2) = (a as f64 * step, b as f64 * step);
            let m = restricted_matrix(spec, &subspace, &[theta1, theta2])?;
            out.push(TorusPoint { theta1, theta2, value: m.get(entry.0, entry.1) });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{Entangler, InitMode};
    use crate::gates::gate_count;

    fn identity_spec(md: usize, depth: usize) -> QflCircuitSpec {
        let layout = RegisterLayout::for_features(md).unwrap();
        let unitaries = vec![ComplexMatrix::identity(layout.index_states()); depth + 1];
        QflCircuitSpec::new(depth, layout, BlockSet::Fixed { unitaries }, false).unwrap()
    }

    #[test]
    fn depth_zero_is_the_single_block() {
        let layout = RegisterLayout::for_features(1).unwrap();
        let u = linalg::haar_unitary(2, &mut rng::substream(1, "t"));
        let spec = QflCircuitSpec::new(0, layout, BlockSet::Fixed { unitaries: vec![u.clone()] }, false).unwrap();
        let m = full_matrix(&spec, &[0.4]).unwrap();
        let expected = linalg::kron(&u, &ComplexMatrix::identity(2)).unwrap();
        assert!(m.max_abs_diff(&expected) < 1e-14);
        let poly = extract_polynomial(&spec, (0, 1), &ExtractionOptions::default()).unwrap();
        assert_eq!(poly.total_degree(), 0);
        assert!((poly.coefficient(&[0]) - u.get(0, 1)).norm() < 1e-12);
    }

    #[test]
    fn identity_blocks_reduce_to_state_prep() {
        let spec = identity_spec(1, 1);
        let x = [0.3];
        let f = to_matrix(&assemble(&spec, &x).unwrap()).unwrap();
        let s = to_matrix(&stateprep::build_state_prep(&x).unwrap()).unwrap();
        assert!(f.max_abs_diff(&s) < 1e-14);
        let p = extract_polynomial(&spec, (1, 1), &ExtractionOptions::default()).unwrap();
        assert_eq!(p.len(), 1);
        assert!((p.coefficient(&[1]) - ONE).norm() < 1e-12);
    }

    #[test]
    fn restrict_state_prep_is_diagonal_phase() {
        let spec = identity_spec(3, 1);
        let phis = [0.2, 1.3, 2.9];
        let r = restricted_matrix(&spec, &spec.subspace().unwrap(), &phis).unwrap();
        let expected = ComplexMatrix::diag(&[ONE, cis(0.2), cis(1.3), cis(2.9)]);
        assert!(r.max_abs_diff(&expected) < 1e-12);
        let sub = InvariantSubspace::new(2, 4);
        assert!(restrict(&ComplexMatrix::identity(8), &sub).unwrap().max_abs_diff(&ComplexMatrix::identity(4)) < 1e-15);
    }

    #[test]
    fn restrict_detects_leakage() {
        let sub = InvariantSubspace::new(1, 2);
        // X on the value qubit swaps v₊ and v₋ sectors
        let xv = linalg::kron(&ComplexMatrix::identity(2), &linalg::pauli(linalg::Axis::X)).unwrap();
        assert!(matches!(restrict(&xv, &sub), Err(Error::InvarianceViolation { .. })));
        assert!(matches!(restrict(&ComplexMatrix::identity(2), &sub), Err(Error::Shape(_))));
    }

    #[test]
    fn ledger_of_assembled_circuit() {
        let layout = RegisterLayout::for_features(7).unwrap();
        let a = AnsatzSpec::new(3, 1, Entangler::Ring).unwrap();
        let params = ParameterVector::init(4, a.params_per_block(), InitMode::SmallAngle, &mut rng::substream(0, "t"));
        let spec = QflCircuitSpec::with_ansatz(3, layout, a, params).unwrap();
        let x = [0.1; 7];
        let ledger = gate_count(&assemble(&spec, &x).unwrap());
        assert_eq!(ledger.count("controlled-ry"), 21);
        let block_gates: usize = (0..4).map(|p| spec.block_circuit(p).unwrap().len()).sum();
        assert_eq!(ledger.total, 3 * 7 + block_gates);
    }

    #[test]
    fn assemble_rejects_wrong_length() {
        let spec = identity_spec(2, 1);
        assert!(matches!(assemble(&spec, &[0.1]), Err(Error::Shape(_))));
    }

    #[test]
    fn toy_example_is_homogeneous_degree_two() {
        let spec = toy_example_spec(&[[0.3, 1.1, 0.7], [2.0, -0.4, 1.3], [0.9, 0.2, -2.2]]).unwrap();
        assert_eq!(spec.invariant_dim().unwrap(), 3);
        let m = extract_matrix_polynomial(&spec, &ExtractionOptions::default()).unwrap();
        let allowed = [vec![2, 0], vec![1, 1], vec![0, 2]];
        for r in 1..=2 {
            for c in 1..=2 {
                for e in m.entry(r, c).support(ZERO_THRESHOLD) {
                    assert!(allowed.contains(&e), "unexpected monomial {e:?}");
                }
            }
        }
    }

    #[test]
    fn polynomial_algebra() {
        let t1 = MultivariatePolynomial::variable(2, 0);
        let t2 = MultivariatePolynomial::variable(2, 1);
        let p = t1.add(&t2).mul(&t1.add(&t2));
        assert_eq!(p.total_degree(), 2);
        assert!((p.coefficient(&[1, 1]) - c64(2.0, 0.0)).norm() < 1e-15);
        let v = p.evaluate(&[cis(0.3), cis(-1.0)]);
        let direct = (cis(0.3) + cis(-1.0)).powu(2);
        assert!((v - direct).norm() < 1e-14);
        let json_round = MultivariatePolynomial::from(PolynomialRepr::from(p.clone()));
        assert_eq!(json_round, p);
    }

    #[test]
    fn expressivity_single_trials() {
        let r = verify_theorem1_trial(2, 3, 0, 42, false).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.max_degree <= 3);
        let neg = verify_theorem1_trial(2, 3, 0, 42, true).unwrap();
        assert!(!neg.pass);
        assert!(neg.max_det_error > 1e-3);
        assert!(neg.max_unitarity_defect < 1e-9);
    }

    #[test]
    fn torus_scan_identity_blocks() {
        let spec = identity_spec(2, 1);
        let grid = torus_scan(&spec, (1, 1), 9).unwrap();
        assert_eq!(grid.len(), 81);
        for p in &grid {
            assert!((p.value - cis(p.theta1)).norm() < 1e-12);
        }
        assert!(torus_scan(&identity_spec(1, 1), (0, 0), 5).is_err());
    }
}
