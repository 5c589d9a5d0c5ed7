//! Dense column-major matrices.
//!
//! Columns are contiguous, which is the access pattern of every hot loop in the
//! detectors (one measurement column at a time, one codebook column at a time).

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

pub type CMat = Mat<Complex64>;
pub type RMat = Mat<f64>;

impl<T: Copy + Default> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, T::default())
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for c in 0..cols {
            for r in 0..rows {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from column-major storage.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(alloc::format!(
                "{} elements for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_columns(rows: usize, columns: &[Vec<T>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * columns.len());
        for col in columns {
            if col.len() != rows {
                return Err(Error::ShapeMismatch(alloc::format!(
                    "column of length {} in a matrix with {rows} rows",
                    col.len()
                )));
            }
            data.extend_from_slice(col);
        }
        Ok(Self {
            rows,
            cols: columns.len(),
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

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn col(&self, c: usize) -> &[T] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, c: usize) -> &mut [T] {
        &mut self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn map<U: Copy + Default>(&self, f: impl Fn(T) -> U) -> Mat<U> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Copies columns `start..start + width`.
    pub fn columns(&self, start: usize, width: usize) -> Result<Self> {
        if start + width > self.cols {
            return Err(Error::ShapeMismatch(alloc::format!(
                "columns {start}..{} of a matrix with {} columns",
                start + width,
                self.cols
            )));
        }
        Ok(Self {
            rows: self.rows,
            cols: width,
            data: self.data[start * self.rows..(start + width) * self.rows].to_vec(),
        })
    }

    /// Overwrites columns `start..start + block.cols()` with `block`.
    pub fn set_columns(&mut self, start: usize, block: &Self) -> Result<()> {
        if block.rows != self.rows || start + block.cols > self.cols {
            return Err(Error::ShapeMismatch(alloc::format!(
                "cannot place a {}x{} block at column {start} of a {}x{} matrix",
                block.rows,
                block.cols,
                self.rows,
                self.cols
            )));
        }
        self.data[start * self.rows..(start + block.cols) * self.rows].copy_from_slice(&block.data);
        Ok(())
    }

    /// Concatenates matrices with equal row counts side by side.
    pub fn hstack(blocks: &[Self]) -> Result<Self> {
        let rows = blocks.first().map_or(0, |b| b.rows);
        let mut data = Vec::new();
        let mut cols = 0;
        for b in blocks {
            if b.rows != rows {
                return Err(Error::ShapeMismatch(alloc::format!(
                    "hstack of blocks with {} and {rows} rows",
                    b.rows
                )));
            }
            data.extend_from_slice(&b.data);
            cols += b.cols;
        }
        Ok(Self { rows, cols, data })
    }
}

impl<T> Index<(usize, usize)> for Mat<T> {
    type Output = T;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &T {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[c * self.rows + r]
    }
}

impl<T> IndexMut<(usize, usize)> for Mat<T> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[c * self.rows + r]
    }
}

impl CMat {
    pub fn frobenius_norm_sqr(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.frobenius_norm_sqr())
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Dense product `self * rhs`.
    pub fn matmul(&self, rhs: &CMat) -> Result<CMat> {
        if self.cols != rhs.rows {
            return Err(Error::ShapeMismatch(alloc::format!(
                "{}x{} times {}x{}",
                self.rows,
                self.cols,
                rhs.rows,
                rhs.cols
            )));
        }
        let mut out = CMat::zeros(self.rows, rhs.cols);
        for c in 0..rhs.cols {
            let dst = &mut out.data[c * self.rows..(c + 1) * self.rows];
            for (j, &w) in rhs.col(c).iter().enumerate() {
                if w == Complex64::new(0.0, 0.0) {
                    continue;
                }
                axpy(w, self.col(j), dst);
            }
        }
        Ok(out)
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> CMat {
        CMat::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn sub(&self, rhs: &CMat) -> Result<CMat> {
        if self.shape() != rhs.shape() {
            return Err(Error::ShapeMismatch(alloc::format!(
                "{:?} minus {:?}",
                self.shape(),
                rhs.shape()
            )));
        }
        Ok(CMat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }
}

impl RMat {
    pub fn all_nonnegative(&self) -> bool {
        self.data.iter().all(|&v| v >= 0.0)
    }
}

/// `dst += alpha * x`.
#[inline]
pub fn axpy(alpha: Complex64, x: &[Complex64], dst: &mut [Complex64]) {
    for (d, &v) in dst.iter_mut().zip(x) {
        *d += alpha * v;
    }
}

/// Hermitian inner product `sum(conj(a) * b)`.
#[inline]
pub fn dotc(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    let mut re = 0.0;
    let mut im = 0.0;
    for (x, y) in a.iter().zip(b) {
        re += x.re * y.re + x.im * y.im;
        im += x.re * y.im - x.im * y.re;
    }
    Complex64::new(re, im)
}
