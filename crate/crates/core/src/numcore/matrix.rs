//! Dense row-major `f64` matrices.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data. Rejects length mismatches and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(invalid(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "matrix entry ({}, {})",
                i / cols.max(1),
                i % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Internal constructor for results of arithmetic on valid matrices.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, data.len());
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_raw(rows, cols, vec![0.0; rows * cols])
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self::from_raw(rows, cols, vec![value; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(invalid(format!(
                "ragged rows: row {bad} has {} columns, expected {cols}",
                rows[bad].len()
            )));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::from_raw(rows, cols, data)
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
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
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols;
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Shape {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; n * m];
        kernels::gemm(&mut out, &self.data, &other.data, n, k, m);
        Ok(Matrix::from_raw(n, m, out))
    }

    /// `self · otherᵀ`.
    pub fn matmul_nt(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::Shape {
                op: "matmul_nt",
                left: self.shape(),
                right: other.shape(),
            });
        }
        // Same summation order as `dot`, laid out so the inner loop runs
        // along contiguous output rows.
        let (n, k, m) = (self.rows, self.cols, other.rows);
        let bt = other.transpose();
        let mut out = vec![0.0; n * m];
        kernels::gemm(&mut out, &self.data, &bt.data, n, k, m);
        Ok(Matrix::from_raw(n, m, out))
    }

    /// `selfᵀ · other`.
    pub fn matmul_tn(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::Shape {
                op: "matmul_tn",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (k, m) = (self.cols, other.cols);
        let mut out = vec![0.0; k * m];
        kernels::gemm_tn(&mut out, &self.data, &other.data, self.rows, k, m);
        Ok(Matrix::from_raw(k, m, out))
    }

    pub fn transpose(&self) -> Matrix {
        // Tiled, so power-of-two strides do not thrash the cache.
        const TILE: usize = 8;
        let (r, c) = (self.rows, self.cols);
        let mut out = vec![0.0; self.data.len()];
        for i0 in (0..r).step_by(TILE) {
            for j0 in (0..c).step_by(TILE) {
                for i in i0..(i0 + TILE).min(r) {
                    for j in j0..(j0 + TILE).min(c) {
                        out[j * r + i] = self.data[i * c + j];
                    }
                }
            }
        }
        Matrix::from_raw(c, r, out)
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

    fn zip_with(&self, other: &Matrix, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::Shape {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Matrix::from_raw(self.rows, self.cols, data))
    }

    pub fn scale(&self, c: f64) -> Matrix {
        self.map(|v| v * c)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix::from_raw(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    /// In-place `self += c · other`.
    pub(crate) fn axpy(&mut self, c: f64, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (m, &v) in means.iter_mut().zip(self.row(i)) {
                *m += v;
            }
        }
        let n = self.rows.max(1) as f64;
        means.iter_mut().for_each(|m| *m /= n);
        means
    }

    /// Subtracts each column's mean.
    pub fn center_columns(&self) -> Matrix {
        let means = self.column_means();
        let mut out = self.clone();
        for i in 0..out.rows {
            for (v, m) in out.row_mut(i).iter_mut().zip(&means) {
                *v -= m;
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix::from_raw(idx.len(), self.cols, data)
    }

    pub fn select_cols(&self, idx: &[usize]) -> Matrix {
        Matrix::from_fn(self.rows, idx.len(), |i, j| self.get(i, idx[j]))
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Row-update matrix products. Each output entry accumulates its terms in
/// ascending inner index, skipping zero left factors, so results do not
/// depend on which instruction set runs the loop. On x86-64 the same code is
/// also compiled with AVX2 and with AVX-512 enabled, picked at run time.
pub(crate) mod kernels {
    /// Output columns held in registers at once.
    const W: usize = 16;

    /// Copies `b` (rows×m) into a zero-padded rows×`mp` buffer.
    fn pad_cols(b: &[f64], rows: usize, m: usize, mp: usize) -> Vec<f64> {
        let mut out = vec![0.0; rows * mp];
        for r in 0..rows {
            out[r * mp..r * mp + m].copy_from_slice(&b[r * m..(r + 1) * m]);
        }
        out
    }

    #[inline(always)]
    fn gemm_body(out: &mut [f64], a: &[f64], b: &[f64], n: usize, k: usize, m: usize) {
        let mp = m.div_ceil(W) * W;
        let padded;
        let b = if mp == m {
            b
        } else {
            padded = pad_cols(b, k, m, mp);
            &padded[..]
        };
        for i in 0..n {
            let a_row = &a[i * k..(i + 1) * k];
            for j0 in (0..mp).step_by(W) {
                let mut acc = [0.0f64; W];
                for (p, &x) in a_row.iter().enumerate() {
                    if x == 0.0 {
                        continue;
                    }
                    let b_blk: &[f64; W] = b[p * mp + j0..p * mp + j0 + W].try_into().unwrap();
                    for c in 0..W {
                        acc[c] += x * b_blk[c];
                    }
                }
                let w = W.min(m - j0);
                for (o, v) in out[i * m + j0..i * m + j0 + w].iter_mut().zip(&acc) {
                    *o += v;
                }
            }
        }
    }

    #[inline(always)]
    fn gemm_tn_body(out: &mut [f64], a: &[f64], b: &[f64], r: usize, k: usize, m: usize) {
        let mp = m.div_ceil(W) * W;
        let padded;
        let b = if mp == m {
            b
        } else {
            padded = pad_cols(b, r, m, mp);
            &padded[..]
        };
        for p in 0..k {
            for j0 in (0..mp).step_by(W) {
                let mut acc = [0.0f64; W];
                for row in 0..r {
                    let x = a[row * k + p];
                    if x == 0.0 {
                        continue;
                    }
                    let b_blk: &[f64; W] = b[row * mp + j0..row * mp + j0 + W].try_into().unwrap();
                    for c in 0..W {
                        acc[c] += x * b_blk[c];
                    }
                }
                let w = W.min(m - j0);
                for (o, v) in out[p * m + j0..p * m + j0 + w].iter_mut().zip(&acc) {
                    *o += v;
                }
            }
        }
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn gemm_avx2(out: &mut [f64], a: &[f64], b: &[f64], n: usize, k: usize, m: usize) {
        gemm_body(out, a, b, n, k, m)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx512f")]
    unsafe fn gemm_avx512(out: &mut [f64], a: &[f64], b: &[f64], n: usize, k: usize, m: usize) {
        gemm_body(out, a, b, n, k, m)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn gemm_tn_avx2(out: &mut [f64], a: &[f64], b: &[f64], r: usize, k: usize, m: usize) {
        gemm_tn_body(out, a, b, r, k, m)
    }

    /// `out (n×m) += a (n×k) · b (k×m)`.
    pub(crate) fn gemm(out: &mut [f64], a: &[f64], b: &[f64], n: usize, k: usize, m: usize) {
        #[cfg(target_arch = "x86_64")]
        if std::arch::is_x86_feature_detected!("avx512f") {
            // SAFETY: the CPU supports AVX-512F.
            return unsafe { gemm_avx512(out, a, b, n, k, m) };
        }
        #[cfg(target_arch = "x86_64")]
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2.
            return unsafe { gemm_avx2(out, a, b, n, k, m) };
        }
        gemm_body(out, a, b, n, k, m)
    }

    /// `out (k×m) += aᵀ · b` for `a` (r×k) and `b` (r×m).
    pub(crate) fn gemm_tn(out: &mut [f64], a: &[f64], b: &[f64], r: usize, k: usize, m: usize) {
        #[cfg(target_arch = "x86_64")]
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2.
            return unsafe { gemm_tn_avx2(out, a, b, r, k, m) };
        }
        gemm_tn_body(out, a, b, r, k, m)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_neutral() {
        let m = Matrix::from_rows(&[vec![1.5, -2.0], vec![0.25, 4.0]]).unwrap();
        assert_eq!(Matrix::identity(2).matmul(&m).unwrap(), m);
    }

    #[test]
    fn small_product() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), (2, 1));
        assert_eq!(c.data(), &[3.0, 7.0]);
    }

    #[test]
    fn mismatch_names_both_shapes() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 2);
        let err = a.matmul(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(2, 3)") && msg.contains("(2, 2)"), "{msg}");
    }

    #[test]
    fn transposed_products_agree() {
        let a = Matrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64 * 0.5 - 2.0);
        let b = Matrix::from_fn(5, 3, |i, j| (i as f64 - j as f64) * 0.3);
        let nt = a.matmul_nt(&b).unwrap();
        let explicit = a.matmul(&b.transpose()).unwrap();
        assert!(nt.max_abs_diff(&explicit) < 1e-14);
        let tn = a.matmul_tn(&a).unwrap();
        let explicit = a.transpose().matmul(&a).unwrap();
        assert!(tn.max_abs_diff(&explicit) < 1e-14);
    }

    #[test]
    fn rejects_non_finite_and_bad_length() {
        assert!(Matrix::new(1, 2, vec![1.0]).is_err());
        assert!(Matrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn centering_zeroes_means() {
        let m = Matrix::from_fn(5, 2, |i, j| (i * i) as f64 + j as f64);
        let c = m.center_columns();
        for mean in c.column_means() {
            assert!(mean.abs() < 1e-12);
        }
    }
}
