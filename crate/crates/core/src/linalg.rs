//! Small dense linear algebra: vectors, row-major square matrices, Cholesky
//! factorization and the Sherman–Morrison rank-one inverse update.
//!
//! Problem dimensions stay in the tens to low hundreds, so everything here is
//! plain loops over contiguous storage.

use std::ops::{Deref, DerefMut, Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Pivots below this value make a matrix "not positive definite".
pub const CHOLESKY_PIVOT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector<T>(Vec<T>);

impl<T: Real> Vector<T> {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![T::zero(); dim])
    }

    pub fn from_vec(entries: Vec<T>) -> Self {
        Self(entries)
    }

    pub fn from_slice(entries: &[T]) -> Self {
        Self(entries.to_vec())
    }

    /// Standard basis vector `e_i`.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.0[i] = T::one();
        v
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }

    pub fn norm(&self) -> T {
        norm(&self.0)
    }

    pub fn dot(&self, other: &[T]) -> T {
        dot(&self.0, other)
    }

    pub fn scaled(&self, c: T) -> Self {
        Self(self.0.iter().map(|&v| v * c).collect())
    }

    /// `self += c * x`
    pub fn axpy(&mut self, c: T, x: &[T]) {
        axpy(&mut self.0, c, x);
    }

    /// Unit vector in the same direction.
    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n <= T::zero() || !n.is_finite() {
            return Err(Error::ZeroVector);
        }
        Ok(Self(self.0.iter().map(|&v| v / n).collect()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn map<U, F: FnMut(T) -> U>(&self, f: F) -> Vector<U> {
        Vector(self.0.iter().copied().map(f).collect())
    }
}

impl<T> Deref for Vector<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

impl<T> DerefMut for Vector<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        &mut self.0
    }
}

impl<T> From<Vec<T>> for Vector<T> {
    fn from(v: Vec<T>) -> Self {
        Self(v)
    }
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut s = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

#[inline]
pub fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

#[inline]
pub fn axpy<T: Real>(y: &mut [T], c: T, x: &[T]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += c * xi;
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, T::one())
    }

    pub fn scaled_identity(n: usize, c: T) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = c;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from literal rows; all rows must share one length.
    pub fn from_rows(rows: &[&[T]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
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

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn mul_vec(&self, x: &[T]) -> Vector<T> {
        debug_assert_eq!(x.len(), self.cols);
        Vector((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    /// `xᵀ · self · x` for square matrices.
    pub fn quad_form(&self, x: &[T]) -> T {
        debug_assert!(self.is_square());
        let mut s = T::zero();
        for (i, &xi) in x.iter().enumerate() {
            s += xi * dot(self.row(i), x);
        }
        s
    }

    pub fn matmul(&self, other: &Matrix<T>) -> Result<Matrix<T>> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                actual: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                axpy(dst, a, orow);
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Matrix<T> {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    /// `self += c · x xᵀ`
    pub fn add_outer(&mut self, c: T, x: &[T]) {
        debug_assert!(self.is_square() && x.len() == self.rows);
        for (i, &xi) in x.iter().enumerate() {
            let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
            axpy(row, c * xi, x);
        }
    }

    pub fn sub(&self, other: &Matrix<T>) -> Matrix<T> {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a - b)
                .collect(),
        }
    }

    pub fn scaled(&self, c: T) -> Matrix<T> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&a| a * c).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> T {
        norm(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Lower-triangular factor `L` with `L·Lᵀ = A`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor<T> {
    lower: Matrix<T>,
}

/// Cholesky factorization of a symmetric matrix. Only the lower triangle is read.
///
/// No jitter is added: a pivot below [`CHOLESKY_PIVOT_FLOOR`] is an error and
/// callers are expected to regularize explicitly.
pub fn cholesky<T: Real>(m: &Matrix<T>) -> Result<CholeskyFactor<T>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.rows,
            actual: m.cols,
        });
    }
    let n = m.rows;
    let floor = T::lit(CHOLESKY_PIVOT_FLOOR);
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut pivot = m[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        // Negated comparison also rejects NaN.
        if !(pivot >= floor) {
            return Err(Error::NotPositiveDefinite {
                index: j,
                pivot: pivot.as_f64(),
            });
        }
        let diag = pivot.sqrt();
        l[(j, j)] = diag;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / diag;
        }
    }
    Ok(CholeskyFactor { lower: l })
}

impl<T: Real> CholeskyFactor<T> {
    pub fn lower(&self) -> &Matrix<T> {
        &self.lower
    }

    pub fn dim(&self) -> usize {
        self.lower.rows
    }

    /// `L · Lᵀ`
    pub fn reconstruct(&self) -> Matrix<T> {
        let n = self.dim();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let k = j + 1;
                let v = dot(&self.lower.row(i)[..k], &self.lower.row(j)[..k]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }

    /// `L · z`
    pub fn mul_lower(&self, z: &[T]) -> Vector<T> {
        let n = self.dim();
        Vector(
            (0..n)
                .map(|i| dot(&self.lower.row(i)[..=i], &z[..=i]))
                .collect(),
        )
    }

    /// Solves `A x = b` by forward and back substitution.
    pub fn solve(&self, b: &[T]) -> Vector<T> {
        let n = self.dim();
        let l = &self.lower;
        let mut y = b.to_vec();
        for i in 0..n {
            let s = dot(&l.row(i)[..i], &y[..i]);
            y[i] = (y[i] - s) / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[(k, i)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        Vector(y)
    }

    pub fn inverse(&self) -> Matrix<T> {
        let n = self.dim();
        let mut inv = Matrix::zeros(n, n);
        for j in 0..n {
            let col = self.solve(&Vector::basis(n, j));
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }
}

/// Returns `(A + x xᵀ)⁻¹` given `inv = A⁻¹` for SPD `A`.
pub fn sherman_morrison_update<T: Real>(inv: &Matrix<T>, x: &[T]) -> Matrix<T> {
    let mut out = inv.clone();
    sherman_morrison_in_place(&mut out, x);
    out
}

/// In-place form of [`sherman_morrison_update`].
pub fn sherman_morrison_in_place<T: Real>(inv: &mut Matrix<T>, x: &[T]) {
    debug_assert!(inv.is_square() && inv.rows == x.len());
    let u = inv.mul_vec(x);
    // inv is symmetric, so xᵀ·inv = (inv·x)ᵀ.
    let denom = T::one() + dot(x, &u);
    inv.add_outer(-T::one() / denom, &u);
}
