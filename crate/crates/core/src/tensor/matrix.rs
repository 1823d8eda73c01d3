use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Matrix {
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

    /// Builds a matrix from row-major values, rejecting wrong lengths and non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "from_vec",
                format!("{} values for a {rows}x{cols} matrix", data.len()),
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite value at row {}, col {}",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[T]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("from_rows", "ragged rows"));
        }
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::from_vec(rows.len(), cols, data)
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
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
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Matrix::from_raw(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn cast<U: Real>(&self) -> Matrix<U> {
        Matrix::from_raw(
            self.rows,
            self.cols,
            self.data
                .iter()
                .map(|v| U::from_f64_lossy(v.to_f64_lossy()))
                .collect(),
        )
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Matrix<T>) -> Result<Matrix<T>> {
        if self.cols != other.rows {
            return Err(Error::shape(
                "matmul",
                format!(
                    "{}x{} times {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            ));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        let n = other.cols;
        for i in 0..self.rows {
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · otherᵀ`. `other` is a weight-sized matrix, so transposing it first
    /// keeps the inner loop in vectorizable axpy form.
    pub(crate) fn matmul_bt(&self, other: &Matrix<T>) -> Matrix<T> {
        debug_assert_eq!(self.cols, other.cols);
        self.matmul(&other.transpose())
            .expect("inner dimensions checked above")
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub(crate) fn matmul_at(&self, other: &Matrix<T>) -> Matrix<T> {
        debug_assert_eq!(self.rows, other.rows);
        let n = other.cols;
        let mut out = Self::zeros(self.cols, n);
        for k in 0..self.rows {
            let b = other.row(k);
            for (i, &a) in self.row(k).iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                for (o, &y) in out.data[i * n..(i + 1) * n].iter_mut().zip(b) {
                    *o += a * y;
                }
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Matrix<T>) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn column_sums(&self) -> Matrix<T> {
        let mut out = Self::zeros(1, self.cols);
        for r in 0..self.rows {
            for (o, &v) in out.data.iter_mut().zip(self.row(r)) {
                *o += v;
            }
        }
        out
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, v| if v.abs() > acc { v.abs() } else { acc })
    }
}

pub fn matmul<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    a.matmul(b)
}

pub fn relu<T: Real>(x: &Matrix<T>) -> Matrix<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Inverted dropout: survivors are scaled by `1/(1-p)` so inactive mode is the identity.
///
/// `active` covers both training and MC-dropout inference.
pub fn dropout<T: Real, R: rand::Rng + ?Sized>(
    x: &Matrix<T>,
    p: f64,
    active: bool,
    rng: &mut R,
) -> Result<Matrix<T>> {
    let mask = dropout_mask(x.rows() * x.cols(), p, active, rng)?;
    Ok(match mask {
        None => x.clone(),
        Some(mask) => Matrix::from_raw(
            x.rows(),
            x.cols(),
            x.as_slice().iter().zip(&mask).map(|(&v, &m)| v * m).collect(),
        ),
    })
}

/// Per-element multipliers (0 or `1/(1-p)`), or `None` when dropout is the identity.
pub(crate) fn dropout_mask<T: Real, R: rand::Rng + ?Sized>(
    len: usize,
    p: f64,
    active: bool,
    rng: &mut R,
) -> Result<Option<Vec<T>>> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::param(format!("dropout rate {p} outside [0, 1)")));
    }
    if !active || p == 0.0 {
        return Ok(None);
    }
    let keep = T::from_f64_lossy(1.0 / (1.0 - p));
    Ok(Some(
        (0..len)
            .map(|_| {
                if rng.random::<f64>() < p {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let b = m(&[&[3.0, 4.0], &[5.0, 6.0]]);
        assert_eq!(Matrix::identity(2).matmul(&b).unwrap(), b);
    }

    #[test]
    fn matmul_row_times_column() {
        let out = m(&[&[1.0, 2.0]]).matmul(&m(&[&[3.0], &[4.0]])).unwrap();
        assert_eq!(out, m(&[&[11.0]]));
    }

    #[test]
    fn matmul_shape_error() {
        let a = Matrix::<f64>::zeros(2, 3);
        let b = Matrix::<f64>::zeros(2, 2);
        assert!(matches!(a.matmul(&b), Err(Error::Shape { .. })));
    }

    #[test]
    fn transposed_products_agree_with_explicit_transpose() {
        let a = m(&[&[1.0, -2.0, 0.5], &[3.0, 0.0, 1.0]]);
        let b = m(&[&[2.0, 1.0, -1.0], &[0.0, 4.0, 2.0]]);
        assert_eq!(a.matmul_bt(&b), a.matmul(&b.transpose()).unwrap());
        assert_eq!(a.matmul_at(&b), a.transpose().matmul(&b).unwrap());
    }

    #[test]
    fn relu_sign_cases() {
        assert_eq!(relu(&m(&[&[-1.0, 0.0, 2.0]])), m(&[&[0.0, 0.0, 2.0]]));
        assert_eq!(
            relu(&m(&[&[-1.0, -3.0], &[-0.5, -2.0]])),
            Matrix::zeros(2, 2)
        );
    }

    #[test]
    fn from_vec_rejects_non_finite() {
        assert!(Matrix::from_vec(1, 2, alloc::vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::<f64>::from_vec(1, 2, alloc::vec![1.0]).is_err());
    }

    #[test]
    fn dropout_zero_rate_is_identity() {
        let x = m(&[&[1.5, -2.0], &[0.25, 7.0]]);
        let mut rng = stream(0, Stream::Dropout);
        assert_eq!(dropout(&x, 0.0, true, &mut rng).unwrap(), x);
        assert_eq!(dropout(&x, 0.4, false, &mut rng).unwrap(), x);
    }

    #[test]
    fn dropout_is_reproducible_by_seed() {
        let x = Matrix::<f32>::filled(8, 8, 1.0);
        let a = dropout(&x, 0.4, true, &mut stream(3, Stream::Dropout)).unwrap();
        let b = dropout(&x, 0.4, true, &mut stream(3, Stream::Dropout)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dropout_preserves_mean() {
        let x = Matrix::<f64>::filled(100, 100, 1.0);
        let y = dropout(&x, 0.4, true, &mut stream(11, Stream::Dropout)).unwrap();
        let mean = y.as_slice().iter().sum::<f64>() / 1e4;
        assert!((mean - 1.0).abs() < 0.05, "mean {mean}");
        // survivors carry exactly 1/(1-p)
        assert!(y
            .as_slice()
            .iter()
            .all(|&v| v == 0.0 || (v - 1.0 / 0.6).abs() < 1e-12));
    }

    #[test]
    fn dropout_rejects_rate_one() {
        let x = Matrix::<f64>::zeros(1, 1);
        assert!(matches!(
            dropout(&x, 1.0, true, &mut stream(0, Stream::Dropout)),
            Err(Error::Parameter(_))
        ));
    }
}
