//! Dense row-major `f64` matrices and vectors.
//!
//! Only what MLP training needs. Every product accumulates over the inner
//! dimension in ascending order, so the sequential and parallel kernels
//! produce bit-identical results for any thread count.

use std::fmt;
use std::ops::Index;

use crate::error::{Error, Result};

/// Below this many multiply-adds the parallel kernel falls back to the
/// sequential one; splitting tiny products costs more than it saves.
#[cfg(feature = "parallel")]
const PAR_MIN_WORK: usize = 1 << 16;

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        if self.rows > 8 {
            writeln!(f, "  ...")?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Length {
                op: "Matrix::new",
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Length {
                    op: "Matrix::from_rows",
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
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
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Matrix product, dispatching to the parallel kernel when the
    /// `parallel` feature is on and the product is large enough.
    pub fn matmul(&self, b: &Matrix) -> Result<Matrix> {
        check_matmul(self, b)?;
        #[cfg(feature = "parallel")]
        {
            if self.rows * self.cols * b.cols >= PAR_MIN_WORK {
                return Ok(matmul_par_unchecked(self, b));
            }
        }
        Ok(matmul_seq_unchecked(self, b))
    }

    /// Adds `b[r]` to every entry of row `r` (i.e. `b` to every column).
    pub fn add_bias(&self, b: &Vector) -> Result<Matrix> {
        if b.len() != self.rows {
            return Err(Error::Length {
                op: "add_bias",
                expected: self.rows,
                found: b.len(),
            });
        }
        let mut out = self.clone();
        for (r, &bias) in b.iter().enumerate() {
            out.row_mut(r).iter_mut().for_each(|v| *v += bias);
        }
        Ok(out)
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn map_inplace<F: Fn(f64) -> f64>(&mut self, f: F) {
        self.data.iter_mut().for_each(|v| *v = f(*v));
    }

    pub fn transpose(&self) -> Matrix {
        let mut data = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for (c, &v) in self.row(r).iter().enumerate() {
                data[c * self.rows + r] = v;
            }
        }
        Matrix {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn scale(&self, k: f64) -> Matrix {
        self.map(|v| v * k)
    }

    /// Selects columns by index, preserving the order of `indices`.
    pub fn col_slice(&self, indices: &[usize]) -> Result<Matrix> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.cols) {
            return Err(Error::IndexOutOfRange {
                op: "col_slice",
                index: bad,
                len: self.cols,
            });
        }
        let mut data = Vec::with_capacity(self.rows * indices.len());
        for r in 0..self.rows {
            let row = self.row(r);
            data.extend(indices.iter().map(|&i| row[i]));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: indices.len(),
            data,
        })
    }

    /// Mean of each row, as a vector of length `rows`.
    pub fn row_means(&self) -> Vector {
        let n = self.cols.max(1) as f64;
        Vector((0..self.rows).map(|r| self.row(r).iter().sum::<f64>() / n).collect())
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    fn zip_with<F: Fn(f64, f64) -> f64>(&self, other: &Matrix, op: &'static str, f: F) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::Shape {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

fn check_matmul(a: &Matrix, b: &Matrix) -> Result<()> {
    if a.cols != b.rows {
        return Err(Error::Shape {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(())
}

#[inline]
fn matmul_row(a_row: &[f64], b: &Matrix, out_row: &mut [f64]) {
    for (k, &aik) in a_row.iter().enumerate() {
        if aik == 0.0 {
            continue;
        }
        let b_row = b.row(k);
        for (o, &bkj) in out_row.iter_mut().zip(b_row) {
            *o += aik * bkj;
        }
    }
}

fn matmul_seq_unchecked(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.rows, b.cols);
    if b.cols == 0 {
        return out;
    }
    for (i, out_row) in out.data.chunks_mut(b.cols).enumerate() {
        matmul_row(a.row(i), b, out_row);
    }
    out
}

#[cfg(feature = "parallel")]
fn matmul_par_unchecked(a: &Matrix, b: &Matrix) -> Matrix {
    use rayon::prelude::*;

    let mut out = Matrix::zeros(a.rows, b.cols);
    if b.cols == 0 {
        return out;
    }
    out.data
        .par_chunks_mut(b.cols)
        .enumerate()
        .for_each(|(i, out_row)| matmul_row(a.row(i), b, out_row));
    out
}

/// Single-threaded product regardless of features.
pub fn matmul_seq(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    check_matmul(a, b)?;
    Ok(matmul_seq_unchecked(a, b))
}

/// Row-parallel product. Each output row is owned by one task and summed in
/// the same order as [`matmul_seq`], so results match it bit for bit.
#[cfg(feature = "parallel")]
pub fn matmul_par(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    check_matmul(a, b)?;
    Ok(matmul_par_unchecked(a, b))
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn zeros(len: usize) -> Self {
        Vector(vec![0.0; len])
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Vector(v)
    }
}

impl Index<usize> for Vector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}
