//! Dense storage and the handful of kernels the factorization needs.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::filled(rows, cols, T::zero())
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Result<Self> {
        check_dims(rows, cols)?;
        Ok(Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        })
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        check_dims(rows, cols)?;
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "from_vec",
                expected: (rows, cols),
                found: (data.len(), 1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        check_dims(rows, cols)?;
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::DimensionMismatch {
                op: "from_rows",
                expected: (r, c),
                found: (r, rows.iter().map(Vec::len).max().unwrap_or(0)),
            });
        }
        Self::from_vec(r, c, rows.concat())
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::from_diag(&vec![T::one(); n])
    }

    pub fn from_diag(diag: &[T]) -> Result<Self> {
        let n = diag.len();
        let mut m = Self::zeros(n, n)?;
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        Ok(m)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<T> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn trace(&self) -> T {
        self.diagonal().into_iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self {
            rows: self.cols,
            cols: self.rows,
            data: vec![T::zero(); self.data.len()],
        };
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// `self · rhs`.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(mismatch("matmul", (self.cols, rhs.cols), rhs.shape()));
        }
        let mut out = Self::zeros(self.rows, rhs.cols)?;
        for r in 0..self.rows {
            let dst = &mut out.data[r * rhs.cols..(r + 1) * rhs.cols];
            for (k, &x) in self.row(r).iter().enumerate() {
                if x == T::zero() {
                    continue;
                }
                axpy(x, rhs.row(k), dst);
            }
        }
        Ok(out)
    }

    /// `self · rhsᵀ`; both operands are traversed along contiguous rows.
    pub fn matmul_transpose(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.cols {
            return Err(mismatch("matmul_transpose", (rhs.rows, self.cols), rhs.shape()));
        }
        let mut out = Self::zeros(self.rows, rhs.rows)?;
        for r in 0..self.rows {
            let lhs_row = self.row(r);
            for k in 0..rhs.rows {
                out.data[r * rhs.rows + k] = dot(lhs_row, rhs.row(k));
            }
        }
        Ok(out)
    }

    /// `selfᵀ · rhs`.
    pub fn transpose_matmul(&self, rhs: &Self) -> Result<Self> {
        if self.rows != rhs.rows {
            return Err(mismatch("transpose_matmul", (self.rows, rhs.cols), rhs.shape()));
        }
        let mut out = Self::zeros(self.cols, rhs.cols)?;
        for r in 0..self.rows {
            let rhs_row = rhs.row(r);
            for (k, &x) in self.row(r).iter().enumerate() {
                if x == T::zero() {
                    continue;
                }
                axpy(x, rhs_row, &mut out.data[k * rhs.cols..(k + 1) * rhs.cols]);
            }
        }
        Ok(out)
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        if self.shape() != other.shape() {
            return Err(mismatch("max_abs_diff", self.shape(), other.shape()));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs())))
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &x| acc.max(x.abs()))
    }
}

impl<T> Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &T {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl<T> IndexMut<(usize, usize)> for DenseMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

/// Dot product with eight independent partial sums so the reduction pipelines.
#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline]
fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn check_dims(rows: usize, cols: usize) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyMatrix { rows, cols });
    }
    Ok(())
}

fn mismatch(op: &'static str, expected: (usize, usize), found: (usize, usize)) -> Error {
    Error::DimensionMismatch { op, expected, found }
}

/// Symmetric matrix expected to be positive definite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpdMatrix<T>(DenseMatrix<T>);

impl<T: Scalar> SpdMatrix<T> {
    /// Relative asymmetry accepted by [`SpdMatrix::new`].
    pub fn symmetry_tolerance() -> T {
        T::of(1e-10).max(T::epsilon() * T::of(64.0))
    }

    /// Wraps `m` after checking it is square and symmetric to within
    /// [`SpdMatrix::symmetry_tolerance`] relative to its largest entry.
    pub fn new(m: DenseMatrix<T>) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(mismatch("SpdMatrix::new", (m.rows(), m.rows()), m.shape()));
        }
        let n = m.rows();
        let scale = m.max_abs().max(T::min_positive_value());
        let mut worst = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((m[(i, j)] - m[(j, i)]).abs() / scale);
            }
        }
        if worst > Self::symmetry_tolerance() {
            return Err(Error::NotSymmetric {
                asymmetry: worst.as_f64(),
            });
        }
        Ok(Self(m))
    }

    /// Averages `m` with its transpose; used where symmetry holds mathematically
    /// and only rounding can break it.
    pub fn symmetrized(m: DenseMatrix<T>) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(mismatch("SpdMatrix::symmetrized", (m.rows(), m.rows()), m.shape()));
        }
        let n = m.rows();
        let half = T::of(0.5);
        let mut out = m;
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = half * (out[(i, j)] + out[(j, i)]);
                out[(i, j)] = avg;
                out[(j, i)] = avg;
            }
        }
        Ok(Self(out))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    #[inline]
    pub fn matrix(&self) -> &DenseMatrix<T> {
        &self.0
    }

    pub fn into_matrix(self) -> DenseMatrix<T> {
        self.0
    }
}

impl<T> Index<(usize, usize)> for SpdMatrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, idx: (usize, usize)) -> &T {
        &self.0[idx]
    }
}

/// Result of [`spd_inverse`]: the inverse and the diagonal jitter that made the
/// factorization succeed (zero when none was needed).
#[derive(Debug, Clone, PartialEq)]
pub struct SpdInverse<T> {
    pub inverse: SpdMatrix<T>,
    pub jitter: T,
}

/// Lower-triangular Cholesky factor, or `None` if a pivot is not strictly positive.
pub fn cholesky<T: Scalar>(m: &DenseMatrix<T>, jitter: T) -> Option<DenseMatrix<T>> {
    let n = m.rows();
    let mut l = DenseMatrix::zeros(n, n).ok()?;
    for j in 0..n {
        let mut d = m[(j, j)] + jitter;
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > T::zero()) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
///
/// A failed factorization is retried with diagonal jitter `1e-10 · tr(M)/n`,
/// escalating by ×10 up to `1e-4 · tr(M)/n`.
pub fn spd_inverse<T: Scalar>(m: &SpdMatrix<T>) -> Result<SpdInverse<T>> {
    let n = m.dim();
    let base = (m.matrix().trace() / T::of(n as f64)).abs();
    let mut jitter = T::zero();
    let mut level = T::of(1e-10);
    let l = loop {
        if let Some(l) = cholesky(m.matrix(), jitter) {
            break l;
        }
        if level > T::of(1e-4 * 1.000_001) {
            return Err(Error::NotPositiveDefinite {
                max_jitter: jitter.as_f64(),
            });
        }
        jitter = level * base;
        level = level * T::of(10.0);
    };

    // L⁻¹ by forward substitution, then M⁻¹ = L⁻ᵀ L⁻¹.
    let mut linv = DenseMatrix::zeros(n, n)?;
    for c in 0..n {
        linv[(c, c)] = T::one() / l[(c, c)];
        for r in (c + 1)..n {
            let mut s = T::zero();
            for k in c..r {
                s -= l[(r, k)] * linv[(k, c)];
            }
            linv[(r, c)] = s / l[(r, r)];
        }
    }
    let mut inv = DenseMatrix::zeros(n, n)?;
    for i in 0..n {
        for j in 0..=i {
            let mut s = T::zero();
            for k in i..n {
                s += linv[(k, i)] * linv[(k, j)];
            }
            inv[(i, j)] = s;
            inv[(j, i)] = s;
        }
    }
    if !inv.is_finite() {
        return Err(Error::NonFinite { what: "spd_inverse" });
    }
    Ok(SpdInverse {
        inverse: SpdMatrix(inv),
        jitter,
    })
}

/// The error-function variant that integrates the Gaussian tail from `x` to ∞:
/// `(2/√π)∫ₓ^∞ e^{−t²} dt`, i.e. the complementary error function `erfc(x)`.
///
/// Kept under its own name so it is never confused with the standard `erf`.
#[inline]
pub fn erf_paper<T: Scalar>(x: T) -> T {
    x.erfc()
}

/// Standard error function `(2/√π)∫₀ˣ e^{−t²} dt`.
#[inline]
pub fn erf<T: Scalar>(x: T) -> T {
    x.erf()
}
