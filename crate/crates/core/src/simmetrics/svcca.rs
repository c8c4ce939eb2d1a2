//! SVCCA: SVD reduction followed by canonical correlation analysis.
//!
//! 1. Z-score each column, `(x − μ) / (σ + 1e-8)`.
//! 2. Keep the smallest `k` leading singular directions whose squared
//!    singular values reach `variance_keep` of the total, capped at
//!    `min(dA, dB)`; the reduced data is `U_k·diag(s_k)`.
//! 3. CCA between the reduced views. The reduced columns are already
//!    orthogonal, so whitening is a per-column division by
//!    `√(s²/(n−1) + ridge)` and the canonical correlations are the
//!    singular values of the whitened cross-covariance.
//! 4. Return the mean of the `min(kA, kB)` canonical correlations.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numcore::{svd, Matrix};

pub const DEFAULT_VARIANCE_KEEP: f64 = 0.99;
pub const ZSCORE_EPS: f64 = 1e-8;
pub const CCA_RIDGE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvccaResult {
    pub value: f64,
    /// Directions kept on each side.
    pub k_a: usize,
    pub k_b: usize,
    pub correlations: Vec<f64>,
}

impl SvccaResult {
    /// Number of canonical correlations averaged.
    pub fn k(&self) -> usize {
        self.correlations.len()
    }
}

pub fn svcca(fa: &Matrix, fb: &Matrix, variance_keep: f64) -> Result<f64> {
    Ok(svcca_detailed(fa, fb, variance_keep)?.value)
}

pub fn svcca_detailed(fa: &Matrix, fb: &Matrix, variance_keep: f64) -> Result<SvccaResult> {
    if fa.rows() != fb.rows() {
        return Err(Error::Shape {
            op: "svcca",
            left: fa.shape(),
            right: fb.shape(),
        });
    }
    if !(variance_keep > 0.0 && variance_keep <= 1.0) {
        return Err(invalid(format!("variance_keep must be in (0, 1], got {variance_keep}")));
    }
    if fa.rows() < 2 {
        return Err(invalid("svcca needs at least 2 samples"));
    }
    if !fa.is_finite() || !fb.is_finite() {
        return Err(Error::NonFinite("svcca input".into()));
    }
    let cap = fa.cols().min(fb.cols());
    let (ra, sa) = reduce(&zscore(fa), variance_keep, cap, "A")?;
    let (rb, sb) = reduce(&zscore(fb), variance_keep, cap, "B")?;

    let dof = (fa.rows() - 1) as f64;
    let mut cross = ra.matmul_tn(&rb)?;
    for i in 0..cross.rows() {
        let wa = (sa[i] * sa[i] / dof + CCA_RIDGE).sqrt();
        for (j, v) in cross.row_mut(i).iter_mut().enumerate() {
            let wb = (sb[j] * sb[j] / dof + CCA_RIDGE).sqrt();
            *v /= dof * wa * wb;
        }
    }
    let correlations: Vec<f64> = svd(&cross)?.s.iter().map(|r| r.clamp(0.0, 1.0)).collect();
    let value = correlations.iter().sum::<f64>() / correlations.len() as f64;
    Ok(SvccaResult {
        value,
        k_a: sa.len(),
        k_b: sb.len(),
        correlations,
    })
}

/// Column z-scores; a column that is constant up to rounding becomes zero.
fn zscore(f: &Matrix) -> Matrix {
    let n = f.rows() as f64;
    let c = f.center_columns();
    let mut ss = vec![0.0; c.cols()];
    let mut raw = vec![0.0; c.cols()];
    for i in 0..c.rows() {
        for (j, v) in c.row(i).iter().enumerate() {
            ss[j] += v * v;
            raw[j] += f.get(i, j) * f.get(i, j);
        }
    }
    let scale: Vec<f64> = ss
        .iter()
        .zip(&raw)
        .map(|(&s, &r)| {
            if s == 0.0 || s <= 1e-24 * r {
                0.0
            } else {
                1.0 / ((s / n).sqrt() + ZSCORE_EPS)
            }
        })
        .collect();
    Matrix::from_fn(c.rows(), c.cols(), |i, j| c.get(i, j) * scale[j])
}

/// Leading directions of `z` as `U_k·diag(s_k)` plus the kept singular values.
fn reduce(z: &Matrix, keep: f64, cap: usize, side: &str) -> Result<(Matrix, Vec<f64>)> {
    let s = svd(z)?;
    let energy: Vec<f64> = s.s.iter().map(|v| v * v).collect();
    let total: f64 = energy.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate(format!(
            "SVCCA side {side} has no variance; fewer than one component survives"
        )));
    }
    let mut k = energy.len();
    let mut acc = 0.0;
    for (i, e) in energy.iter().enumerate() {
        acc += e;
        if acc >= keep * total {
            k = i + 1;
            break;
        }
    }
    let k = k.min(cap);
    let mut r = s.u.select_cols(&(0..k).collect::<Vec<_>>());
    for i in 0..r.rows() {
        for (v, sv) in r.row_mut(i).iter_mut().zip(&s.s) {
            *v *= sv;
        }
    }
    Ok((r, s.s[..k].to_vec()))
}
