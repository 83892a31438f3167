//! Dense row-major matrices and the kernels the rest of the crate builds on.

mod eigen;
mod ops;

pub use eigen::{sym_eig_topk, EigenResult};
pub use ops::{layer_norm_rows, normalize_rows, relu, softmax_rows};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major dense matrix. Entries are finite whenever the matrix was
/// produced by a public constructor or operation.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Mat<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::InvalidArgument(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        let m = Mat { rows, cols, data };
        m.ensure_finite("Mat::new")?;
        Ok(m)
    }

    /// Builds from nested rows; every row must have the same length.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::InvalidArgument(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Mat::new(rows.len(), cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Mat {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    /// Internal constructor that skips validation; callers guarantee the length.
    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(rows * cols, data.len());
        Mat { rows, cols, data }
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
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self.at(i, j)).collect()
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub(crate) fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn ensure_finite(&self, op: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(op.to_string()))
        }
    }

    pub fn transpose(&self) -> Self {
        let mut out = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                out.push(self.data[i * self.cols + j]);
            }
        }
        Mat::from_vec_unchecked(self.cols, self.rows, out)
    }

    /// Matrix product. Each output entry accumulates over the inner index in
    /// ascending order, so results are bit-reproducible.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let out = self.mm(other);
        out.ensure_finite("matmul")?;
        Ok(out)
    }

    /// `self · other` without the public shape/finiteness checks.
    pub(crate) fn mm(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "mm: inner dimensions differ");
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![T::zero(); n * m];
        for i in 0..n {
            let orow = &mut out[i * m..(i + 1) * m];
            let arow = &self.data[i * k..(i + 1) * k];
            for (p, &a) in arow.iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                let brow = &other.data[p * m..(p + 1) * m];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Mat::from_vec_unchecked(n, m, out)
    }

    /// `self · otherᵀ`.
    pub(crate) fn mm_nt(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.cols, "mm_nt: inner dimensions differ");
        let (n, m) = (self.rows, other.rows);
        let mut out = Vec::with_capacity(n * m);
        for i in 0..n {
            let arow = self.row(i);
            for j in 0..m {
                let brow = other.row(j);
                let mut acc = T::zero();
                for (&a, &b) in arow.iter().zip(brow) {
                    acc += a * b;
                }
                out.push(acc);
            }
        }
        Mat::from_vec_unchecked(n, m, out)
    }

    /// `selfᵀ · other`.
    pub(crate) fn mm_tn(&self, other: &Self) -> Self {
        assert_eq!(self.rows, other.rows, "mm_tn: inner dimensions differ");
        let (k, m) = (self.cols, other.cols);
        let mut out = vec![T::zero(); k * m];
        for i in 0..self.rows {
            let arow = self.row(i);
            let brow = other.row(i);
            for (p, &a) in arow.iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                let orow = &mut out[p * m..(p + 1) * m];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Mat::from_vec_unchecked(k, m, out)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Mat::from_vec_unchecked(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    pub(crate) fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!(self.shape(), other.shape(), "zip_map: shapes differ");
        Mat::from_vec_unchecked(
            self.rows,
            self.cols,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same(other, "add")?;
        Ok(self.zip_map(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same(other, "sub")?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|v| v * c)
    }

    pub(crate) fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape(), other.shape(), "add_assign: shapes differ");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    fn check_same(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff: shapes differ");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }

    /// Columns `start..end` as a new matrix.
    pub fn slice_cols(&self, start: usize, end: usize) -> Self {
        assert!(start <= end && end <= self.cols, "slice_cols out of range");
        let w = end - start;
        let mut out = Vec::with_capacity(self.rows * w);
        for i in 0..self.rows {
            out.extend_from_slice(&self.row(i)[start..end]);
        }
        Mat::from_vec_unchecked(self.rows, w, out)
    }

    /// Horizontal concatenation; all parts must share the row count.
    pub fn hconcat(parts: &[&Self]) -> Result<Self> {
        let rows = parts.first().map_or(0, |p| p.rows);
        if let Some(bad) = parts.iter().find(|p| p.rows != rows) {
            return Err(Error::ShapeMismatch {
                op: "hconcat",
                left: parts[0].shape(),
                right: bad.shape(),
            });
        }
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for p in parts {
                out.extend_from_slice(p.row(i));
            }
        }
        Ok(Mat::from_vec_unchecked(rows, cols, out))
    }

    /// Rows picked by `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut out = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            out.extend_from_slice(self.row(i));
        }
        Mat::from_vec_unchecked(indices.len(), self.cols, out)
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    /// Converts element precision.
    pub fn cast<U: Scalar>(&self) -> Mat<U> {
        Mat::from_vec_unchecked(
            self.rows,
            self.cols,
            self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        )
    }
}
