//! Dense complex linear algebra: matrices, statevectors and the handful of
//! decompositions the verifiers need.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use num_complex::Complex;
#[allow(unused_imports)] // shadowed by inherent methods when std is in the graph
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type C64 = Complex<f64>;

/// Largest number of entries any exported constructor will produce.
pub const MAX_ENTRIES: usize = 1 << 20;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// `e^{i * angle}`
#[inline]
pub fn cis(angle: f64) -> C64 {
    C64::new(angle.cos(), angle.sin())
}

/// Pauli axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Dense row-major complex matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(Error::Shape(alloc::format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m.data[i * dim + i] = ONE;
        }
        m
    }

    pub fn diag(entries: &[C64]) -> Self {
        let n = entries.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in entries.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from a slice of equally long rows.
    pub fn from_rows(rows: &[&[C64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Ok(Self { rows: rows.len(), cols, data: rows.iter().flat_map(|r| r.iter().copied()).collect() })
    }

    /// Column vector.
    pub fn column(entries: &[C64]) -> Self {
        Self { rows: entries.len(), cols: 1, data: entries.to_vec() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: C64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r).conj())
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| v * s).collect() }
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Largest entrywise modulus of `self - other`; infinite on shape mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.rows != other.rows || self.cols != other.cols {
            return f64::INFINITY;
        }
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn submatrix(&self, row0: usize, col0: usize, rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |r, c| self.get(row0 + r, col0 + c))
    }

    /// `self * v` for a dense vector.
    pub fn mul_vec(&self, v: &[C64]) -> Result<Vec<C64>> {
        if v.len() != self.cols {
            return Err(Error::Shape(alloc::format!(
                "{}x{} matrix times vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok(self
            .data
            .chunks_exact(self.cols.max(1))
            .take(self.rows)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    kron_with_limit(a, b, MAX_ENTRIES)
}

pub fn kron_with_limit(a: &ComplexMatrix, b: &ComplexMatrix, limit: usize) -> Result<ComplexMatrix> {
    let rows = a.rows.checked_mul(b.rows);
    let cols = a.cols.checked_mul(b.cols);
    let requested = match (rows, cols) {
        (Some(r), Some(c)) => r.checked_mul(c).unwrap_or(usize::MAX),
        _ => usize::MAX,
    };
    if requested > limit {
        return Err(Error::Size { requested, limit });
    }
    let (rows, cols) = (a.rows * b.rows, a.cols * b.cols);
    Ok(ComplexMatrix::from_fn(rows, cols, |r, c| {
        a.get(r / b.rows, c / b.cols) * b.get(r % b.rows, c % b.cols)
    }))
}

pub fn matmul(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if a.cols != b.rows {
        return Err(Error::Shape(alloc::format!(
            "cannot multiply {}x{} by {}x{}",
            a.rows,
            a.cols,
            b.rows,
            b.cols
        )));
    }
    let mut out = ComplexMatrix::zeros(a.rows, b.cols);
    for r in 0..a.rows {
        for k in 0..a.cols {
            let av = a.get(r, k);
            if av == ZERO {
                continue;
            }
            let brow = &b.data[k * b.cols..(k + 1) * b.cols];
            let orow = &mut out.data[r * b.cols..(r + 1) * b.cols];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(out)
}

/// Product of a non-empty chain, left to right.
pub fn matmul_chain(factors: &[&ComplexMatrix]) -> Result<ComplexMatrix> {
    let (first, rest) = factors.split_first().ok_or_else(|| Error::Shape("empty product".into()))?;
    rest.iter().try_fold((*first).clone(), |acc, m| matmul(&acc, m))
}

/// Determinant by LU factorisation with partial pivoting.
pub fn determinant(a: &ComplexMatrix) -> Result<C64> {
    if !a.is_square() {
        return Err(Error::Shape(alloc::format!("determinant of {}x{} matrix", a.rows, a.cols)));
    }
    let n = a.rows;
    let mut lu = a.data.clone();
    let mut det = ONE;
    for k in 0..n {
        let pivot = (k..n)
            .max_by(|&i, &j| lu[i * n + k].norm().total_cmp(&lu[j * n + k].norm()))
            .unwrap_or(k);
        if lu[pivot * n + k] == ZERO {
            return Ok(ZERO);
        }
        if pivot != k {
            for c in 0..n {
                lu.swap(k * n + c, pivot * n + c);
            }
            det = -det;
        }
        let p = lu[k * n + k];
        det *= p;
        for r in (k + 1)..n {
            let factor = lu[r * n + k] / p;
            if factor == ZERO {
                continue;
            }
            for c in (k + 1)..n {
                let v = lu[k * n + c];
                lu[r * n + c] -= factor * v;
            }
        }
    }
    Ok(det)
}

/// Max-abs entry of `A†A − I`.
pub fn unitarity_defect(a: &ComplexMatrix) -> f64 {
    let gram = matmul(&a.adjoint(), a).expect("A†A is always conformable");
    gram.max_abs_diff(&ComplexMatrix::identity(a.cols))
}

pub fn pauli(axis: Axis) -> ComplexMatrix {
    match axis {
        Axis::X => ComplexMatrix { rows: 2, cols: 2, data: vec![ZERO, ONE, ONE, ZERO] },
        Axis::Y => ComplexMatrix { rows: 2, cols: 2, data: vec![ZERO, -I, I, ZERO] },
        Axis::Z => ComplexMatrix { rows: 2, cols: 2, data: vec![ONE, ZERO, ZERO, -ONE] },
    }
}

/// `e^{i θ σ_axis} = cos θ · I + i sin θ · σ_axis`
pub fn pauli_exp(axis: Axis, theta: f64) -> ComplexMatrix {
    let (s, c) = theta.sin_cos();
    let p = pauli(axis);
    ComplexMatrix::from_fn(2, 2, |r, col| {
        let id = if r == col { c64(c, 0.0) } else { ZERO };
        id + I * s * p.get(r, col)
    })
}

pub fn hadamard() -> ComplexMatrix {
    let h = core::f64::consts::FRAC_1_SQRT_2;
    ComplexMatrix { rows: 2, cols: 2, data: vec![c64(h, 0.0), c64(h, 0.0), c64(h, 0.0), c64(-h, 0.0)] }
}

/// QR factorisation of a square or tall matrix by modified Gram–Schmidt with one
/// re-orthogonalisation pass. Returns `(Q, R)` with `Q` having orthonormal columns.
pub fn qr(a: &ComplexMatrix) -> Result<(ComplexMatrix, ComplexMatrix)> {
    if a.rows < a.cols {
        return Err(Error::Shape("qr needs rows >= cols".into()));
    }
    let (m, n) = (a.rows, a.cols);
    let mut q = a.clone();
    let mut r = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        for _pass in 0..2 {
            for k in 0..j {
                let proj: C64 = (0..m).map(|i| q.get(i, k).conj() * q.get(i, j)).sum();
                r[(k, j)] += proj;
                for i in 0..m {
                    let v = q.get(i, k);
                    q[(i, j)] -= proj * v;
                }
            }
        }
        let norm = (0..m).map(|i| q.get(i, j).norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Input("rank-deficient matrix in qr".into()));
        }
        r[(j, j)] = c64(norm, 0.0);
        for i in 0..m {
            q[(i, j)] /= norm;
        }
    }
    Ok((q, r))
}

/// Haar-random `dim × dim` unitary: QR of a complex Gaussian matrix with the phases of
/// `R`'s diagonal pushed back into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> ComplexMatrix {
    loop {
        let g = ComplexMatrix::from_fn(dim, dim, |_, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            c64(re, im)
        });
        // Singular draws have probability zero; retry rather than fail.
        if let Ok((q, _)) = qr(&g) {
            return q;
        }
    }
}

/// Least-squares solution of the real system `a x ≈ b` with Tikhonov weight `ridge`.
///
/// `a` is row-major with `cols` columns. Solved by Householder QR of the stacked system
/// `[a; sqrt(ridge) I] x = [b; 0]`.
pub fn real_least_squares(a: &[f64], cols: usize, b: &[f64], ridge: f64) -> Result<Vec<f64>> {
    if cols == 0 || a.len() % cols != 0 || a.len() / cols != b.len() {
        return Err(Error::Shape("least-squares operands disagree".into()));
    }
    let rows0 = b.len();
    let lam = ridge.max(0.0).sqrt();
    let extra = if lam > 0.0 { cols } else { 0 };
    let rows = rows0 + extra;
    if rows < cols {
        return Err(Error::Shape("underdetermined least-squares system".into()));
    }
    let mut m = vec![0.0; rows * cols];
    m[..a.len()].copy_from_slice(a);
    let mut rhs = vec![0.0; rows];
    rhs[..rows0].copy_from_slice(b);
    for k in 0..extra {
        m[(rows0 + k) * cols + k] = lam;
    }

    for k in 0..cols {
        let norm = (k..rows).map(|i| m[i * cols + k] * m[i * cols + k]).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if m[k * cols + k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..rows).map(|i| m[i * cols + k]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for c in k..cols {
            let dot: f64 = (k..rows).map(|i| v[i - k] * m[i * cols + c]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k..rows {
                m[i * cols + c] -= f * v[i - k];
            }
        }
        let dot: f64 = (k..rows).map(|i| v[i - k] * rhs[i]).sum();
        let f = 2.0 * dot / vnorm2;
        for i in k..rows {
            rhs[i] -= f * v[i - k];
        }
    }

    let scale = (0..cols).map(|k| m[k * cols + k].abs()).fold(0.0, f64::max);
    let mut x = vec![0.0; cols];
    for k in (0..cols).rev() {
        let diag = m[k * cols + k];
        // Numerically null directions are left at zero (minimum-norm-ish solution).
        if diag.abs() <= scale * 1e-13 {
            continue;
        }
        let s: f64 = ((k + 1)..cols).map(|c| m[k * cols + c] * x[c]).sum();
        x[k] = (rhs[k] - s) / diag;
    }
    Ok(x)
}

/// Statevector over `num_qubits` qubits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantumState {
    num_qubits: usize,
    amplitudes: Vec<C64>,
}

impl QuantumState {
    /// `|0…0>`
    pub fn zero(num_qubits: usize) -> Self {
        Self::basis(num_qubits, 0)
    }

    pub fn basis(num_qubits: usize, index: usize) -> Self {
        let mut amplitudes = vec![ZERO; 1 << num_qubits];
        amplitudes[index] = ONE;
        Self { num_qubits, amplitudes }
    }

    pub fn from_amplitudes(amplitudes: Vec<C64>) -> Result<Self> {
        let len = amplitudes.len();
        if len == 0 || !len.is_power_of_two() {
            return Err(Error::Shape(alloc::format!("{len} amplitudes is not a power of two")));
        }
        Ok(Self { num_qubits: len.trailing_zeros() as usize, amplitudes })
    }

    /// Random normalised state with Gaussian amplitudes.
    pub fn random<R: Rng + ?Sized>(num_qubits: usize, rng: &mut R) -> Self {
        let mut amplitudes: Vec<C64> = (0..1usize << num_qubits)
            .map(|_| c64(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        amplitudes.iter_mut().for_each(|a| *a /= norm);
        Self { num_qubits, amplitudes }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `<self|other>`
    pub fn inner(&self, other: &Self) -> C64 {
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.amplitudes.len() != other.amplitudes.len() {
            return f64::INFINITY;
        }
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ry(theta: f64) -> ComplexMatrix {
        // exp(-i θ σ_y / 2)
        pauli_exp(Axis::Y, -theta / 2.0)
    }

    #[test]
    fn kron_identities() {
        let i4 = kron(&ComplexMatrix::identity(2), &ComplexMatrix::identity(2)).unwrap();
        assert_eq!(i4, ComplexMatrix::identity(4));

        let (a, b) = (c64(0.3, 0.0), c64(-1.7, 0.0));
        let v = kron(&ComplexMatrix::column(&[a, ONE]), &ComplexMatrix::column(&[b, ONE])).unwrap();
        assert_eq!(v.data(), &[a * b, a, b, ONE]);
    }

    #[test]
    fn kron_of_paulis_matches_brute_force() {
        let xz = kron(&pauli(Axis::X), &pauli(Axis::Z)).unwrap();
        let z = ComplexMatrix::diag(&[ONE, -ONE]);
        // brute-force expansion: [[0, Z], [Z, 0]]
        let mut expected = ComplexMatrix::zeros(4, 4);
        for r in 0..2 {
            for c in 0..2 {
                expected[(r, 2 + c)] = z.get(r, c);
                expected[(2 + r, c)] = z.get(r, c);
            }
        }
        assert_eq!(xz, expected);
    }

    #[test]
    fn kron_size_cap() {
        let big = ComplexMatrix::zeros(1024, 1);
        let err = kron_with_limit(&big, &big, 1000).unwrap_err();
        assert!(matches!(err, Error::Size { requested: 1_048_576, limit: 1000 }));
        assert!(kron(&ComplexMatrix::zeros(1025, 1), &ComplexMatrix::zeros(1024, 1)).is_err());
    }

    #[test]
    fn matmul_rotation_composition() {
        let pi = core::f64::consts::PI;
        let twice = matmul(&ry(pi), &ry(pi)).unwrap();
        assert!(twice.max_abs_diff(&ry(2.0 * pi)) < 1e-15);
        assert!(twice.max_abs_diff(&ComplexMatrix::identity(2).scale(-ONE)) < 1e-15);

        let a = ComplexMatrix::from_fn(3, 2, |r, c| c64(r as f64, c as f64));
        assert_eq!(matmul(&a, &ComplexMatrix::identity(2)).unwrap(), a);
        assert!(matches!(matmul(&a, &a), Err(Error::Shape(_))));
    }

    #[test]
    fn haar_unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for dim in [2, 3, 4, 8] {
            let u = haar_unitary(dim, &mut rng);
            let uu = matmul(&u, &u.adjoint()).unwrap();
            assert!(uu.max_abs_diff(&ComplexMatrix::identity(dim)) < 1e-12);
            assert!(unitarity_defect(&u) < 1e-12);
        }
    }

    #[test]
    fn determinant_cases() {
        assert!((determinant(&ComplexMatrix::identity(5)).unwrap() - ONE).norm() < 1e-15);
        for theta in [0.0, 0.4, 2.0, -3.1] {
            assert!((determinant(&ry(theta)).unwrap() - ONE).norm() < 1e-15);
        }
        let phi = 0.77;
        let d = determinant(&ComplexMatrix::diag(&[ONE, cis(phi)])).unwrap();
        assert!((d - cis(phi)).norm() < 1e-15);
        assert!(determinant(&ComplexMatrix::zeros(2, 3)).is_err());
        // needs a row swap
        let swap = ComplexMatrix::from_rows(&[&[ZERO, ONE], &[ONE, ZERO]]).unwrap();
        assert!((determinant(&swap).unwrap() + ONE).norm() < 1e-15);
    }

    #[test]
    fn determinant_is_multiplicative() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let a = haar_unitary(8, &mut rng);
            let b = haar_unitary(8, &mut rng);
            let lhs = determinant(&matmul(&a, &b).unwrap()).unwrap();
            let rhs = determinant(&a).unwrap() * determinant(&b).unwrap();
            assert!((lhs - rhs).norm() < 1e-9);
        }
    }

    #[test]
    fn unitarity_defect_cases() {
        assert_eq!(unitarity_defect(&ComplexMatrix::identity(3)), 0.0);
        assert!(unitarity_defect(&hadamard()) < 1e-15);
        let scaled = ComplexMatrix::identity(2).scale(c64(1.01, 0.0));
        assert!((unitarity_defect(&scaled) - 0.0201).abs() < 1e-12);
    }

    #[test]
    fn least_squares_recovers_exact_solution() {
        // 4x2 consistent system
        let a = [1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0];
        let b = [1.0, 3.0, 5.0, 7.0];
        let x = real_least_squares(&a, 2, &b, 0.0).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn state_basics() {
        let s = QuantumState::zero(2);
        assert_eq!(s.amplitudes(), &[ONE, ZERO, ZERO, ZERO]);
        assert!(QuantumState::from_amplitudes(vec![ONE; 3]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = QuantumState::random(3, &mut rng);
        assert!((r.norm_sqr() - 1.0).abs() < 1e-12);
    }
}
