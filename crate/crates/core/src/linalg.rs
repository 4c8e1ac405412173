//! Dense row-major matrices and the handful of kernels the rest of the crate needs.
//!
//! Every higher module addresses entries as `(row, col)`. Public operations return
//! fresh matrices. The matrix products fan out over output rows when the
//! `parallel` feature is enabled; each output row is computed by the same loop
//! either way, so results are bit-identical across execution modes.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Result, SimecError};

/// Execution strategy for the row-parallel kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    /// Falls back to [`Exec::Sequential`] when built without the `parallel` feature.
    Parallel,
}

impl Exec {
    pub const fn default_for_build() -> Exec {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

/// Below this many multiply-adds a product is always run sequentially.
const PAR_THRESHOLD: usize = 1 << 15;

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            writeln!(f, "  {:?}", &self.row(r)[..self.cols.min(8)])?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Matrix {
        Matrix {
            rows,
            cols,
            values: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Matrix {
        let mut m = Matrix::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Result<Matrix> {
        if values.len() != rows * cols {
            return Err(SimecError::invalid(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                values.len()
            )));
        }
        Ok(Matrix { rows, cols, values })
    }

    /// Builds from nested rows; panics on ragged input (test and fixture convenience).
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Matrix {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            values.extend_from_slice(r.as_ref());
        }
        Matrix {
            rows: rows.len(),
            cols,
            values,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Matrix {
        let mut values = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                values.push(f(r, c));
            }
        }
        Matrix { rows, cols, values }
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

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub(crate) fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Copies the rows with the given indices, in order.
    pub fn select_rows(&self, ids: &[usize]) -> Matrix {
        let mut values = Vec::with_capacity(ids.len() * self.cols);
        for &r in ids {
            values.extend_from_slice(self.row(r));
        }
        Matrix {
            rows: ids.len(),
            cols: self.cols,
            values,
        }
    }

    /// Copies the columns with the given indices, in order.
    pub fn select_cols(&self, ids: &[usize]) -> Matrix {
        Matrix::from_fn(self.rows, ids.len(), |r, c| self[(r, ids[c])])
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|v| v * s)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    pub fn zip_with(
        &self,
        other: &Matrix,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(SimecError::shape(op, self.shape(), other.shape()));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub(crate) fn add_assign_scaled(&mut self, other: &Matrix, s: f64) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.values.iter_mut().zip(&other.values) {
            *a += s * b;
        }
    }

    /// `(S + Sᵀ) / 2`; the result is exactly symmetric.
    pub fn symmetrize(&self) -> Result<Matrix> {
        if !self.is_square() {
            return Err(SimecError::shape("symmetrize", self.shape(), self.shape()));
        }
        let n = self.rows;
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            out[(i, i)] = self[(i, i)];
            for j in (i + 1)..n {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        Ok(out)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                if (self[(i, j)] - self[(j, i)]).abs() > tol {
                    return false;
                }
            }
        }
        true
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.values[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.values[r * self.cols + c]
    }
}

/// Runs `f(row_index, row)` over every row of `out`, in parallel when allowed.
fn for_each_row(out: &mut Matrix, work: usize, exec: Exec, f: impl Fn(usize, &mut [f64]) + Sync + Send) {
    let cols = out.cols;
    if cols == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    if exec == Exec::Parallel && work >= PAR_THRESHOLD {
        use rayon::prelude::*;
        out.values
            .par_chunks_mut(cols)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
        return;
    }
    let _ = (work, exec);
    out.values
        .chunks_mut(cols)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
}

/// `a · b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    matmul_with(a, b, Exec::default_for_build())
}

pub fn matmul_with(a: &Matrix, b: &Matrix, exec: Exec) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(SimecError::shape("matmul", a.shape(), b.shape()));
    }
    if b.cols < SKINNY_COLS && a.cols >= SKINNY_COLS {
        return matmul_nt_with(a, &transpose(b), exec);
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for_each_row(&mut out, a.rows * a.cols * b.cols, exec, |i, row| {
        axpy_rows(a.row(i), b, row);
    });
    debug_assert!(out.all_finite() || !(a.all_finite() && b.all_finite()));
    Ok(out)
}

/// Below this many columns a right-hand operand is multiplied through dot
/// products with its transpose instead.
const SKINNY_COLS: usize = 16;

/// `out += Σ_k arow[k] · b.row(k)`, four rows of `b` per pass.
fn axpy_rows(arow: &[f64], b: &Matrix, out: &mut [f64]) {
    let mut quads = arow.chunks_exact(4);
    let mut k = 0;
    for q in quads.by_ref() {
        if q.iter().any(|&v| v != 0.0) {
            let (b0, b1, b2, b3) = (b.row(k), b.row(k + 1), b.row(k + 2), b.row(k + 3));
            for (j, o) in out.iter_mut().enumerate() {
                *o += q[0] * b0[j] + q[1] * b1[j] + q[2] * b2[j] + q[3] * b3[j];
            }
        }
        k += 4;
    }
    for &aik in quads.remainder() {
        if aik != 0.0 {
            for (o, &bkj) in out.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
        k += 1;
    }
}

/// `aᵀ · b` without materializing the transpose.
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != b.rows {
        return Err(SimecError::shape("matmul_tn", a.shape(), b.shape()));
    }
    // Transposing `a` once keeps the inner loop contiguous in both operands.
    matmul(&transpose(a), b)
}

/// `a · bᵀ` without materializing the transpose.
pub fn matmul_nt(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    matmul_nt_with(a, b, Exec::default_for_build())
}

pub fn matmul_nt_with(a: &Matrix, b: &Matrix, exec: Exec) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(SimecError::shape("matmul_nt", a.shape(), b.shape()));
    }
    let mut out = Matrix::zeros(a.rows, b.rows);
    for_each_row(&mut out, a.rows * a.cols * b.rows, exec, |i, row| {
        let arow = a.row(i);
        for (j, o) in row.iter_mut().enumerate() {
            *o = dot(arow, b.row(j));
        }
    });
    Ok(out)
}

/// Inner product accumulated in four interleaved partial sums.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn transpose(a: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.cols, a.rows);
    for r in 0..a.rows {
        for c in 0..a.cols {
            out.values[c * a.rows + r] = a.values[r * a.cols + c];
        }
    }
    out
}

/// Sum of squared entries.
pub fn frobenius_sq(a: &Matrix) -> f64 {
    a.values.iter().map(|v| v * v).sum()
}

/// Mean squared difference over the entries where `mask == 1` (all entries when
/// no mask is given).
pub fn masked_mse(a: &Matrix, b: &Matrix, mask: Option<&Matrix>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(SimecError::shape("masked_mse", a.shape(), b.shape()));
    }
    match mask {
        None => {
            if a.values.is_empty() {
                return Err(SimecError::NoObservedEntries);
            }
            let s: f64 = a
                .values
                .iter()
                .zip(&b.values)
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            Ok(s / a.values.len() as f64)
        }
        Some(mask) => {
            if mask.shape() != a.shape() {
                return Err(SimecError::shape("masked_mse mask", a.shape(), mask.shape()));
            }
            let mut s = 0.0;
            let mut count = 0usize;
            for ((x, y), &w) in a.values.iter().zip(&b.values).zip(&mask.values) {
                if w != 0.0 {
                    s += (x - y) * (x - y);
                    count += 1;
                }
            }
            if count == 0 {
                return Err(SimecError::NoObservedEntries);
            }
            Ok(s / count as f64)
        }
    }
}

/// Mean squared error of `a` against `b`; panics on shape mismatch. Used in
/// reporting paths where shapes are already established.
pub fn mse(a: &Matrix, b: &Matrix) -> f64 {
    masked_mse(a, b, None).expect("mse: shapes checked by caller")
}
