//! Singular value decomposition by one-sided Jacobi rotations.
//!
//! The matrices seen here are at most a few thousand rows by a dozen or so
//! columns, where Hestenes' one-sided Jacobi method is accurate (it gets
//! small singular values to high relative precision) and needs no external
//! LAPACK. Rotations are applied in a fixed cyclic order, so the result is
//! deterministic.

use crate::error::{invalid, Error, Result};
use crate::numcore::matrix::dot;
use crate::numcore::Matrix;

pub const SVD_MAX_SWEEPS: usize = 1000;
pub const SVD_TOL: f64 = 1e-10;

/// Thin SVD `m = u · diag(s) · vᵀ`; singular values non-increasing.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

impl Svd {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (x, s) in us.row_mut(i).iter_mut().zip(&self.s) {
                *x *= s;
            }
        }
        us.matmul_nt(&self.v).expect("svd factors have consistent shapes")
    }
}

/// Full thin SVD: `k = min(rows, cols)` components.
pub fn svd(m: &Matrix) -> Result<Svd> {
    if m.rows() >= m.cols() {
        jacobi_tall(m)
    } else {
        let t = jacobi_tall(&m.transpose())?;
        Ok(Svd { u: t.v, s: t.s, v: t.u })
    }
}

/// Leading `k` singular triplets.
pub fn svd_truncated(m: &Matrix, k: usize) -> Result<Svd> {
    let full = m.rows().min(m.cols());
    if k > full {
        return Err(invalid(format!(
            "svd_truncated: k = {k} exceeds min(rows, cols) = {full}"
        )));
    }
    if !m.is_finite() {
        return Err(Error::NonFinite("svd input".into()));
    }
    let s = svd(m)?;
    let keep: Vec<usize> = (0..k).collect();
    Ok(Svd {
        u: s.u.select_cols(&keep),
        s: s.s[..k].to_vec(),
        v: s.v.select_cols(&keep),
    })
}

fn jacobi_tall(a: &Matrix) -> Result<Svd> {
    let (m, n) = a.shape();
    // Columns of `a` stored as rows, so rotations touch contiguous memory.
    let mut cols = a.transpose();
    let mut v = Matrix::identity(n);
    let mut converged = n < 2;
    let mut residual = 0.0;

    for _sweep in 0..SVD_MAX_SWEEPS {
        residual = 0.0_f64;
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(cols.row(p), cols.row(p));
                let beta = dot(cols.row(q), cols.row(q));
                let gamma = dot(cols.row(p), cols.row(q));
                if gamma == 0.0 || alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let off = gamma.abs() / (alpha * beta).sqrt();
                residual = residual.max(off);
                if off <= SVD_TOL {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut cols, p, q, c, s);
                rotate_rows(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            what: "jacobi svd",
            iterations: SVD_MAX_SWEEPS,
            residual,
        });
    }

    // `v` accumulated rotations as rows; its transpose holds right vectors as columns.
    let v = v.transpose();
    let mut sigma: Vec<(f64, usize)> = (0..n).map(|j| (dot(cols.row(j), cols.row(j)).sqrt(), j)).collect();
    sigma.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let scale = sigma.first().map_or(0.0, |s| s.0);
    let tiny = scale * m.max(n) as f64 * f64::EPSILON;
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut s_out = Vec::with_capacity(n);
    let mut order = Vec::with_capacity(n);
    for &(s, j) in &sigma {
        order.push(j);
        if s > tiny && s > 0.0 {
            u_cols.push(cols.row(j).iter().map(|x| x / s).collect());
            s_out.push(s);
        } else {
            u_cols.push(Vec::new());
            s_out.push(0.0);
        }
    }
    complete_orthonormal(&mut u_cols, m);

    let u = Matrix::from_fn(m, n, |i, j| u_cols[j][i]);
    let v = v.select_cols(&order);
    Ok(Svd { u, s: s_out, v })
}

fn rotate_rows(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let cols = m.cols();
    let data = m.data_mut();
    let (head, tail) = data.split_at_mut(q * cols);
    let rp = &mut head[p * cols..(p + 1) * cols];
    let rq = &mut tail[..cols];
    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Fills empty slots with unit vectors orthogonal to every filled slot
/// (modified Gram–Schmidt over the standard basis).
fn complete_orthonormal(vecs: &mut [Vec<f64>], dim: usize) {
    let mut candidate = 0usize;
    for slot in 0..vecs.len() {
        if !vecs[slot].is_empty() {
            continue;
        }
        while candidate < dim {
            let mut e = vec![0.0; dim];
            e[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for other in vecs.iter().filter(|w| !w.is_empty()) {
                    let proj = dot(&e, other);
                    for (x, o) in e.iter_mut().zip(other) {
                        *x -= proj * o;
                    }
                }
            }
            let norm = dot(&e, &e).sqrt();
            if norm > 1e-6 {
                e.iter_mut().for_each(|x| *x /= norm);
                vecs[slot] = e;
                break;
            }
        }
    }
}

/// Orthogonality defect `max |UᵀU − I|`.
pub fn orthogonality_error(u: &Matrix) -> f64 {
    let g = u.matmul_tn(u).expect("square gram");
    g.max_abs_diff(&Matrix::identity(u.cols()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;

    #[test]
    fn diagonal_values() {
        let m = Matrix::diag(&[3.0, 2.0, 1.0]);
        let s = svd_truncated(&m, 2).unwrap();
        assert_eq!(s.s.len(), 2);
        assert!((s.s[0] - 3.0).abs() < 1e-12 && (s.s[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn identity_values() {
        let s = svd_truncated(&Matrix::identity(3), 3).unwrap();
        for v in &s.s {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn random_tall_is_orthonormal_and_reconstructs() {
        let mut rng = Rng::new(11);
        let m = rng.normal_matrix(10, 4);
        let s = svd_truncated(&m, 4).unwrap();
        assert!(orthogonality_error(&s.u) < 1e-8);
        assert!(orthogonality_error(&s.v) < 1e-8);
        assert!(s.s.windows(2).all(|w| w[0] >= w[1]));
        let rel = s.reconstruct().sub(&m).unwrap().frobenius_norm() / m.frobenius_norm();
        assert!(rel < 1e-8, "reconstruction error {rel}");
    }

    #[test]
    fn wide_and_rank_deficient() {
        let mut rng = Rng::new(12);
        let a = rng.normal_matrix(3, 1);
        let b = rng.normal_matrix(1, 6);
        let m = a.matmul(&b).unwrap(); // rank 1, 3x6
        let s = svd(&m).unwrap();
        assert_eq!(s.u.shape(), (3, 3));
        assert_eq!(s.v.shape(), (6, 3));
        assert!(s.s[1].abs() < 1e-12 && s.s[2].abs() < 1e-12);
        assert!(orthogonality_error(&s.u) < 1e-8);
        let rel = s.reconstruct().sub(&m).unwrap().frobenius_norm() / m.frobenius_norm();
        assert!(rel < 1e-8);
    }

    #[test]
    fn zero_matrix_gets_orthonormal_u() {
        let s = svd(&Matrix::zeros(5, 3)).unwrap();
        assert!(s.s.iter().all(|&v| v == 0.0));
        assert!(orthogonality_error(&s.u) < 1e-12);
    }

    #[test]
    fn k_too_large() {
        assert!(svd_truncated(&Matrix::identity(3), 4).is_err());
    }
}
