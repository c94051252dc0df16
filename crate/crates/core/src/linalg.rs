//! Dense real and complex linear algebra.
//!
//! Everything here is sized for desk-scale finite element systems (a few
//! hundred unknowns at most), so storage is dense and row-major throughout.
//! The complex types mirror the real ones but only carry the operations the
//! frequency-domain rotor model needs.

use std::cell::Cell;
use std::fmt;
use std::ops::{Add, Deref, DerefMut, Div, Index, IndexMut, Mul, Neg, Sub};
use std::sync::atomic::{AtomicU64, Ordering};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Pivots smaller than this fraction of the largest entry in their column are
/// treated as zero.
pub const PIVOT_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("shape mismatch in {op}: expected {expected}, found {found}")]
    Shape {
        op: &'static str,
        expected: String,
        found: String,
    },
    #[error("matrix is singular (pivot {pivot} below threshold)")]
    Singular { pivot: usize },
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
    #[error("matrix data length {len} does not match {rows}x{cols}")]
    DataLength { rows: usize, cols: usize, len: usize },
    #[error("matrix dimensions must be at least 1x1, got {rows}x{cols}")]
    Empty { rows: usize, cols: usize },
}

pub(crate) fn shape_err(op: &'static str, expected: impl fmt::Display, found: impl fmt::Display) -> LinalgError {
    LinalgError::Shape {
        op,
        expected: expected.to_string(),
        found: found.to_string(),
    }
}

// Direct-solver probe. Every factorization bumps both counters; the thread
// local one lets tests that run concurrently observe only their own calls.
static DIRECT_SOLVES: AtomicU64 = AtomicU64::new(0);
thread_local! {
    static THREAD_DIRECT_SOLVES: Cell<u64> = const { Cell::new(0) };
}

fn record_direct_solve() {
    DIRECT_SOLVES.fetch_add(1, Ordering::Relaxed);
    THREAD_DIRECT_SOLVES.with(|c| c.set(c.get() + 1));
}

/// Process-wide number of direct factorizations performed so far.
pub fn direct_solve_count() -> u64 {
    DIRECT_SOLVES.load(Ordering::Relaxed)
}

/// Number of direct factorizations performed on the calling thread.
pub fn thread_direct_solve_count() -> u64 {
    THREAD_DIRECT_SOLVES.with(|c| c.get())
}

/// Scalar field shared by the real and complex kernels.
pub(crate) trait Field:
    Copy
    + PartialEq
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    const ZERO: Self;
    fn modulus(self) -> f64;
    fn modulus_sqr(self) -> f64;
}

impl Field for f64 {
    const ZERO: Self = 0.0;
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn modulus_sqr(self) -> f64 {
        self * self
    }
}

impl Field for Complex64 {
    const ZERO: Self = Complex64 { re: 0.0, im: 0.0 };
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn modulus_sqr(self) -> f64 {
        self.norm_sqr()
    }
}

fn matvec_kernel<T: Field>(rows: usize, cols: usize, a: &[T], x: &[T]) -> Vec<T> {
    (0..rows)
        .map(|i| {
            a[i * cols..(i + 1) * cols]
                .iter()
                .zip(x)
                .fold(T::ZERO, |acc, (&aij, &xj)| acc + aij * xj)
        })
        .collect()
}

fn vecmat_kernel<T: Field>(rows: usize, cols: usize, a: &[T], x: &[T]) -> Vec<T> {
    let mut out = vec![T::ZERO; cols];
    for (i, &xi) in x.iter().enumerate().take(rows) {
        let row = &a[i * cols..(i + 1) * cols];
        for (o, &aij) in out.iter_mut().zip(row) {
            *o = *o + xi * aij;
        }
    }
    out
}

fn norm_kernel<T: Field>(x: &[T]) -> f64 {
    x.iter().map(|v| v.modulus_sqr()).sum::<f64>().sqrt()
}

/// In-place LU factorization with partial pivoting. Returns the row
/// permutation; `a` holds L (unit diagonal, below) and U (on and above).
fn lu_factor_kernel<T: Field>(n: usize, a: &mut [T]) -> Result<Vec<usize>, LinalgError> {
    let mut col_scale = vec![0.0f64; n];
    for i in 0..n {
        for (j, s) in col_scale.iter_mut().enumerate() {
            *s = s.max(a[i * n + j].modulus());
        }
    }
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (p, pmax) = (k..n)
            .map(|i| (i, a[i * n + k].modulus()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if col_scale[k] == 0.0 || pmax <= PIVOT_THRESHOLD * col_scale[k] {
            return Err(LinalgError::Singular { pivot: k });
        }
        if p != k {
            for j in 0..n {
                a.swap(k * n + j, p * n + j);
            }
            perm.swap(k, p);
        }
        let pivot = a[k * n + k];
        for i in k + 1..n {
            let factor = a[i * n + k] / pivot;
            a[i * n + k] = factor;
            if factor != T::ZERO {
                for j in k + 1..n {
                    a[i * n + j] = a[i * n + j] - factor * a[k * n + j];
                }
            }
        }
    }
    Ok(perm)
}

fn lu_substitute<T: Field>(n: usize, lu: &[T], perm: &[usize], b: &[T]) -> Vec<T> {
    let mut y: Vec<T> = perm.iter().map(|&p| b[p]).collect();
    for i in 0..n {
        let mut s = y[i];
        for j in 0..i {
            s = s - lu[i * n + j] * y[j];
        }
        y[i] = s;
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for j in i + 1..n {
            s = s - lu[i * n + j] * y[j];
        }
        y[i] = s / lu[i * n + i];
    }
    y
}

// ---------------------------------------------------------------------------
// Real types
// ---------------------------------------------------------------------------

/// Real vector.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        euclidean_norm(self)
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self(self.0.iter().map(|v| alpha * v).collect())
    }

    /// `self - other`, entrywise.
    pub fn sub(&self, other: &[f64]) -> Result<Self, LinalgError> {
        if self.len() != other.len() {
            return Err(shape_err("sub", self.len(), other.len()));
        }
        Ok(Self(self.0.iter().zip(other).map(|(a, b)| a - b).collect()))
    }
}

impl Deref for DenseVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for DenseVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for DenseVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl From<&[f64]> for DenseVector {
    fn from(v: &[f64]) -> Self {
        Self(v.to_vec())
    }
}

impl FromIterator<f64> for DenseVector {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// Real row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix")]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::Empty { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(LinalgError::DataLength {
                rows,
                cols,
                len: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Panics on a zero dimension; use [`DenseMatrix::new`] for checked input.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|row| row.len() != c) {
            return Err(shape_err("from_rows", c, bad.len()));
        }
        Self::new(r, c, rows.concat())
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm_kernel(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| alpha * v).collect(),
        }
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<Self, LinalgError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(shape_err(
                "add",
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    /// Extracts the submatrix with the given row and column index lists.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut out = Self::zeros(rows.len().max(1), cols.len().max(1));
        for (i, &r) in rows.iter().enumerate() {
            for (j, &c) in cols.iter().enumerate() {
                out[(i, j)] = self[(r, c)];
            }
        }
        out
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<Self, LinalgError> {
        if self.cols != other.rows {
            return Err(shape_err("matmul", self.cols, other.rows));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.data[k * other.cols + j];
                }
            }
        }
        Ok(out)
    }

    /// Inverse via LU factorization. Counts as a direct solve.
    pub fn inverse(&self) -> Result<Self, LinalgError> {
        let lu = LuFactors::new(self)?;
        let n = self.rows;
        let mut inv = Self::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.fill(0.0);
            e[j] = 1.0;
            let col = lu.solve(&e)?;
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        Ok(inv)
    }

    /// Lower-triangular Cholesky factor; fails unless symmetric positive definite.
    pub fn cholesky(&self) -> Result<Self, LinalgError> {
        if !self.is_square() {
            return Err(shape_err("cholesky", "square", format!("{}x{}", self.rows, self.cols)));
        }
        let n = self.rows;
        let mut l = Self::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(LinalgError::NotPositiveDefinite { pivot: j });
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in j + 1..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(l)
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= rel_tol * scale))
    }
}

#[derive(Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawMatrix> for DenseMatrix {
    type Error = LinalgError;
    fn try_from(raw: RawMatrix) -> Result<Self, LinalgError> {
        Self::new(raw.rows, raw.cols, raw.data)
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// `A x`.
pub fn matvec(a: &DenseMatrix, x: &[f64]) -> Result<DenseVector, LinalgError> {
    if a.cols != x.len() {
        return Err(shape_err("matvec", a.cols, x.len()));
    }
    Ok(DenseVector(matvec_kernel(a.rows, a.cols, &a.data, x)))
}

/// `xᵀ A`, returned as a column vector of length `A.cols`.
pub fn vecmat(x: &[f64], a: &DenseMatrix) -> Result<DenseVector, LinalgError> {
    if a.rows != x.len() {
        return Err(shape_err("vecmat", a.rows, x.len()));
    }
    Ok(DenseVector(vecmat_kernel(a.rows, a.cols, &a.data, x)))
}

pub fn euclidean_norm(x: &[f64]) -> f64 {
    norm_kernel(x)
}

/// Reusable LU factorization of a square real matrix.
#[derive(Debug, Clone)]
pub struct LuFactors {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl LuFactors {
    pub fn new(a: &DenseMatrix) -> Result<Self, LinalgError> {
        if !a.is_square() {
            return Err(shape_err("lu", "square", format!("{}x{}", a.rows, a.cols)));
        }
        record_direct_solve();
        let mut lu = a.data.clone();
        let perm = lu_factor_kernel(a.rows, &mut lu)?;
        Ok(Self { n: a.rows, lu, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Result<DenseVector, LinalgError> {
        if b.len() != self.n {
            return Err(shape_err("lu_solve", self.n, b.len()));
        }
        Ok(DenseVector(lu_substitute(self.n, &self.lu, &self.perm, b)))
    }
}

/// Solves `A x = b` by LU with partial pivoting.
pub fn lu_solve(a: &DenseMatrix, b: &[f64]) -> Result<DenseVector, LinalgError> {
    if a.rows != b.len() {
        return Err(shape_err("lu_solve", a.rows, b.len()));
    }
    LuFactors::new(a)?.solve(b)
}

// ---------------------------------------------------------------------------
// Complex types
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComplexVector(Vec<Complex64>);

impl ComplexVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![Complex64::new(0.0, 0.0); len])
    }

    pub fn from_real(v: &[f64]) -> Self {
        Self(v.iter().map(|&r| Complex64::new(r, 0.0)).collect())
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        complex_norm(self)
    }

    pub fn sub(&self, other: &[Complex64]) -> Result<Self, LinalgError> {
        if self.len() != other.len() {
            return Err(shape_err("sub", self.len(), other.len()));
        }
        Ok(Self(self.0.iter().zip(other).map(|(a, b)| a - b).collect()))
    }
}

impl Deref for ComplexVector {
    type Target = [Complex64];
    fn deref(&self) -> &[Complex64] {
        &self.0
    }
}

impl DerefMut for ComplexVector {
    fn deref_mut(&mut self) -> &mut [Complex64] {
        &mut self.0
    }
}

impl From<Vec<Complex64>> for ComplexVector {
    fn from(v: Vec<Complex64>) -> Self {
        Self(v)
    }
}

impl FromIterator<Complex64> for ComplexVector {
    fn from_iter<I: IntoIterator<Item = Complex64>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// Complex row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self, LinalgError> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::Empty { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(LinalgError::DataLength {
                rows,
                cols,
                len: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn from_real(m: &DenseMatrix) -> Self {
        Self {
            rows: m.rows,
            cols: m.cols,
            data: m.data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
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

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    /// Real parts, as a real matrix.
    pub fn re(&self) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v.re).collect(),
        }
    }

    /// Imaginary parts, as a real matrix.
    pub fn im(&self) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v.im).collect(),
        }
    }

    /// `self + alpha * other`.
    pub fn add_scaled_real(&self, alpha: Complex64, other: &DenseMatrix) -> Result<Self, LinalgError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(shape_err(
                "add",
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, &b)| a + alpha * b).collect(),
        })
    }

    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut out = Self::zeros(rows.len().max(1), cols.len().max(1));
        for (i, &r) in rows.iter().enumerate() {
            for (j, &c) in cols.iter().enumerate() {
                out[(i, j)] = self[(r, c)];
            }
        }
        out
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn complex_matvec(a: &ComplexMatrix, x: &[Complex64]) -> Result<ComplexVector, LinalgError> {
    if a.cols != x.len() {
        return Err(shape_err("matvec", a.cols, x.len()));
    }
    Ok(ComplexVector(matvec_kernel(a.rows, a.cols, &a.data, x)))
}

/// `xᵀ A` (plain transpose, no conjugation).
pub fn complex_vecmat(x: &[Complex64], a: &ComplexMatrix) -> Result<ComplexVector, LinalgError> {
    if a.rows != x.len() {
        return Err(shape_err("vecmat", a.rows, x.len()));
    }
    Ok(ComplexVector(vecmat_kernel(a.rows, a.cols, &a.data, x)))
}

/// `√(Σ|xᵢ|²)` using the complex modulus.
pub fn complex_norm(x: &[Complex64]) -> f64 {
    norm_kernel(x)
}

pub fn complex_lu_solve(a: &ComplexMatrix, b: &[Complex64]) -> Result<ComplexVector, LinalgError> {
    if !a.is_square() {
        return Err(shape_err("lu_solve", "square", format!("{}x{}", a.rows, a.cols)));
    }
    if a.rows != b.len() {
        return Err(shape_err("lu_solve", a.rows, b.len()));
    }
    record_direct_solve();
    let mut lu = a.data.clone();
    let perm = lu_factor_kernel(a.rows, &mut lu)?;
    Ok(ComplexVector(lu_substitute(a.rows, &lu, &perm, b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DenseMatrix {
        DenseMatrix::new(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn matvec_identity_and_diagonal() {
        let y = matvec(&DenseMatrix::identity(3), &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 2.0, 3.0]);
        let d = DenseMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 3.0]]).unwrap();
        assert_eq!(matvec(&d, &[1.0, 1.0]).unwrap().as_slice(), &[2.0, 3.0]);
    }

    #[test]
    fn matvec_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 5, 5);
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = matvec(&a, &x).unwrap();
        for i in 0..5 {
            let mut s = 0.0;
            for j in 0..5 {
                s += a.data()[i * 5 + j] * x[j];
            }
            assert_relative_eq!(y[i], s, max_relative = 1e-15);
        }
    }

    #[test]
    fn matvec_shape_error() {
        let a = DenseMatrix::zeros(2, 3);
        assert!(matches!(matvec(&a, &[1.0, 2.0]), Err(LinalgError::Shape { .. })));
        assert!(matches!(vecmat(&[1.0, 2.0, 3.0], &a), Err(LinalgError::Shape { .. })));
    }

    #[test]
    fn vecmat_cases() {
        let y = vecmat(&[1.0, 0.0, 0.0], &DenseMatrix::identity(3)).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 0.0, 0.0]);
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(vecmat(&[1.0, 1.0], &a).unwrap().as_slice(), &[4.0, 6.0]);
    }

    #[test]
    fn norms() {
        assert_eq!(euclidean_norm(&[0.0, 0.0, 0.0]), 0.0);
        assert_eq!(euclidean_norm(&[3.0, 4.0]), 5.0);
        let z = [Complex64::new(1.0, 1.0), Complex64::new(0.0, 0.0)];
        assert_relative_eq!(complex_norm(&z), 2f64.sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn lu_solve_cases() {
        let x = lu_solve(&DenseMatrix::identity(2), &[7.0, 9.0]).unwrap();
        assert_eq!(x.as_slice(), &[7.0, 9.0]);
        let a = DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let x = lu_solve(&a, &[3.0, 4.0]).unwrap();
        assert_relative_eq!(x[0], 1.0, max_relative = 1e-14);
        assert_relative_eq!(x[1], 1.0, max_relative = 1e-14);
        let s = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(lu_solve(&s, &[1.0, 2.0]), Err(LinalgError::Singular { .. })));
    }

    #[test]
    fn lu_solve_counts_direct_solves() {
        let before = thread_direct_solve_count();
        lu_solve(&DenseMatrix::identity(2), &[1.0, 1.0]).unwrap();
        assert_eq!(thread_direct_solve_count(), before + 1);
    }

    #[test]
    fn inverse_and_cholesky() {
        let a = DenseMatrix::from_rows(&[vec![4.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let inv = a.inverse().unwrap();
        let prod = a.matmul(&inv).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(prod[(i, j)], if i == j { 1.0 } else { 0.0 }, epsilon = 1e-14);
            }
        }
        assert!(a.cholesky().is_ok());
        let indefinite = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(indefinite.cholesky().is_err());
    }

    #[test]
    fn complex_solve_reduces_to_real() {
        let a = DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let xr = lu_solve(&a, &[3.0, 4.0]).unwrap();
        let xc = complex_lu_solve(&ComplexMatrix::from_real(&a), &ComplexVector::from_real(&[3.0, 4.0])).unwrap();
        for i in 0..2 {
            assert_eq!(xc[i].im, 0.0);
            assert_relative_eq!(xc[i].re, xr[i], max_relative = 1e-15);
        }
    }

    proptest! {
        #[test]
        fn vecmat_equals_transpose_matvec(seed in 0u64..1000, r in 1usize..6, c in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(&mut rng, r, c);
            let x: Vec<f64> = (0..r).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lhs = vecmat(&x, &a).unwrap();
            let rhs = matvec(&a.transpose(), &x).unwrap();
            for j in 0..c {
                prop_assert!((lhs[j] - rhs[j]).abs() <= 1e-14 * (1.0 + rhs[j].abs()));
            }
        }

        #[test]
        fn norm_is_absolutely_homogeneous(seed in 0u64..1000, alpha in -1e3f64..1e3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..7).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let scaled: Vec<f64> = x.iter().map(|v| alpha * v).collect();
            let lhs = euclidean_norm(&scaled);
            let rhs = alpha.abs() * euclidean_norm(&x);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(f64::MIN_POSITIVE));
        }

        #[test]
        fn lu_solve_backward_error(seed in 0u64..1000, n in 1usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // diagonally dominated to keep the condition number modest
            let mut a = random_matrix(&mut rng, n, n);
            for i in 0..n {
                a[(i, i)] += n as f64;
            }
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = lu_solve(&a, &b).unwrap();
            let r = matvec(&a, &x).unwrap().sub(&b).unwrap();
            prop_assert!(r.norm() <= 1e-10 * euclidean_norm(&b));
        }

        #[test]
        fn complex_with_zero_imaginary_matches_real(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(&mut rng, 4, 4);
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let yr = matvec(&a, &x).unwrap();
            let yc = complex_matvec(&ComplexMatrix::from_real(&a), &ComplexVector::from_real(&x)).unwrap();
            for i in 0..4 {
                prop_assert_eq!(yc[i].re, yr[i]);
                prop_assert_eq!(yc[i].im, 0.0);
            }
            prop_assert_eq!(complex_norm(&yc), euclidean_norm(&yr));
        }
    }
}
