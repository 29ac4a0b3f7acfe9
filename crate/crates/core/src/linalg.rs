//! Minimal dense matrix/vector kernels.
//!
//! Everything here is deliberately plain: row-major storage with explicit
//! shapes (the checkpoint and export formats are defined in terms of this
//! layout), hot loops written so the compiler can vectorize them, and a
//! spike-driven variant of the matrix-vector product that only touches the
//! columns of active (binary) inputs.
//!
//! Generic over [`Real`] so the gradient-check oracles can run the identical
//! code path in f64 while inference and training store f32.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar abstraction: f32 for inference/training storage, f64 inside
/// verification oracles.
pub trait Real:
    num_traits::Float + std::fmt::Debug + std::iter::Sum + Default + Send + Sync + 'static
{
    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;
    fn from_f32(x: f32) -> Self;
    fn as_f32(self) -> f32;
    fn from_usize(x: usize) -> Self {
        Self::from_f64(x as f64)
    }
}

impl Real for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn from_f32(x: f32) -> Self {
        x
    }
    fn as_f32(self) -> f32 {
        self
    }
}

impl Real for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn from_f32(x: f32) -> Self {
        x as f64
    }
    fn as_f32(self) -> f32 {
        self as f32
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim("Mat::from_vec", rows * cols, data.len()));
        }
        Ok(Mat { rows, cols, data })
    }

    /// Identity-shaped matrix (ones on the diagonal), not necessarily square.
    pub fn eye(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { T::one() } else { T::zero() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// `y += A·x`
    pub fn mul_vec_add(&self, x: &[T], y: &mut [T]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        for (r, yr) in y.iter_mut().enumerate() {
            let row = self.row(r);
            let mut acc = T::zero();
            for (a, b) in row.iter().zip(x.iter()) {
                acc = acc + *a * *b;
            }
            *yr = *yr + acc;
        }
    }

    /// `y += Aᵀ·x`
    pub fn tr_mul_vec_add(&self, x: &[T], y: &mut [T]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(y.len(), self.cols);
        for (r, &xr) in x.iter().enumerate() {
            if xr == T::zero() {
                continue;
            }
            let row = self.row(r);
            for (yc, a) in y.iter_mut().zip(row.iter()) {
                *yc = *yc + *a * xr;
            }
        }
    }

    /// `y += Σ_{j ∈ active} A[:, j]` — matrix product with a binary vector
    /// given as the index list of its ones.
    pub fn mul_spikes_add(&self, active: &[usize], y: &mut [T]) {
        debug_assert_eq!(y.len(), self.rows);
        for (r, yr) in y.iter_mut().enumerate() {
            let row = self.row(r);
            let mut acc = T::zero();
            for &j in active {
                acc = acc + row[j];
            }
            *yr = *yr + acc;
        }
    }

    /// `A += g·aᵀ`
    pub fn add_outer(&mut self, g: &[T], a: &[T]) {
        debug_assert_eq!(g.len(), self.rows);
        debug_assert_eq!(a.len(), self.cols);
        for (r, &gr) in g.iter().enumerate() {
            if gr == T::zero() {
                continue;
            }
            let row = self.row_mut(r);
            for (w, &av) in row.iter_mut().zip(a.iter()) {
                *w = *w + gr * av;
            }
        }
    }

    /// `A[:, j] += g` for every j in `active` (outer product with a binary
    /// vector given by its active indices).
    pub fn add_outer_spikes(&mut self, g: &[T], active: &[usize]) {
        debug_assert_eq!(g.len(), self.rows);
        for (r, &gr) in g.iter().enumerate() {
            if gr == T::zero() {
                continue;
            }
            let row = self.row_mut(r);
            for &j in active {
                row[j] = row[j] + gr;
            }
        }
    }

    /// `A += s·B` (shapes must match).
    pub fn add_scaled(&mut self, s: T, other: &Mat<T>) {
        debug_assert_eq!(self.rows, other.rows);
        debug_assert_eq!(self.cols, other.cols);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a = *a + s * *b;
        }
    }

    /// `A·B` as a new matrix. Only used on small compose-time products, so a
    /// plain triple loop accumulating in f64 is fine and keeps the folded
    /// weights well rounded.
    pub fn matmul(&self, other: &Mat<T>) -> Result<Mat<T>> {
        if self.cols != other.rows {
            return Err(Error::dim("Mat::matmul", self.cols, other.rows));
        }
        let mut out = Mat::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for c in 0..other.cols {
                let mut acc = 0f64;
                for k in 0..self.cols {
                    acc += self.get(r, k).as_f64() * other.get(k, c).as_f64();
                }
                out.set(r, c, T::from_f64(acc));
            }
        }
        Ok(out)
    }

    /// New matrix keeping only the listed rows, in the given order.
    pub fn select_rows(&self, keep: &[usize]) -> Mat<T> {
        let mut out = Mat::zeros(keep.len(), self.cols);
        for (nr, &r) in keep.iter().enumerate() {
            out.row_mut(nr).copy_from_slice(self.row(r));
        }
        out
    }

    /// New matrix keeping only the listed columns, in the given order.
    pub fn select_cols(&self, keep: &[usize]) -> Mat<T> {
        let mut out = Mat::zeros(self.rows, keep.len());
        for r in 0..self.rows {
            let src = self.row(r);
            let dst = out.row_mut(r);
            for (nc, &c) in keep.iter().enumerate() {
                dst[nc] = src[c];
            }
        }
        out
    }

    /// Horizontal concatenation `[A | B]`.
    pub fn hcat(&self, other: &Mat<T>) -> Result<Mat<T>> {
        if self.rows != other.rows {
            return Err(Error::dim("Mat::hcat", self.rows, other.rows));
        }
        let mut out = Mat::zeros(self.rows, self.cols + other.cols);
        for r in 0..self.rows {
            out.row_mut(r)[..self.cols].copy_from_slice(self.row(r));
            out.row_mut(r)[self.cols..].copy_from_slice(other.row(r));
        }
        Ok(out)
    }

    /// Scale column `c` by `s`.
    pub fn scale_col(&mut self, c: usize, s: T) {
        for r in 0..self.rows {
            let v = self.get(r, c);
            self.set(r, c, v * s);
        }
    }

    pub fn abs_col_sum(&self, c: usize) -> T {
        let mut acc = T::zero();
        for r in 0..self.rows {
            acc = acc + self.get(r, c).abs();
        }
        acc
    }

    pub fn to_f64(&self) -> Mat<f64> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x.as_f64()).collect(),
        }
    }

    pub fn to_f32(&self) -> Mat<f32> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x.as_f32()).collect(),
        }
    }
}

/// `y = 0`
pub fn zero_vec<T: Real>(y: &mut [T]) {
    y.iter_mut().for_each(|x| *x = T::zero());
}

/// Squared L2 norm of a slice.
pub fn norm_sq<T: Real>(x: &[T]) -> T {
    x.iter().map(|&v| v * v).sum()
}
