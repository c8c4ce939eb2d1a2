//! Linear-kernel HSIC and CKA.
//!
//! For column-centered `FA` (n×dA) and `FB` (n×dB):
//!
//! ```text
//! HSIC(A, B) = ‖FAᵀ·FB‖²_F / (n − 1)²
//! CKA(A, B)  = HSIC(A, B) / √(HSIC(A, A) · HSIC(B, B))
//! ```
//!
//! The feature-space form avoids building the n×n Gram matrices.

use crate::error::{invalid, Error, Result};
use crate::numcore::Matrix;

/// Linear HSIC of already-centered representations.
pub fn hsic_linear(fa: &Matrix, fb: &Matrix) -> Result<f64> {
    if fa.rows() != fb.rows() {
        return Err(Error::Shape {
            op: "hsic_linear",
            left: fa.shape(),
            right: fb.shape(),
        });
    }
    let n = fa.rows();
    if n < 2 {
        return Err(invalid(format!("hsic needs at least 2 samples, got {n}")));
    }
    let cross = fa.matmul_tn(fb)?;
    let f = cross.frobenius_norm();
    let denom = (n - 1) as f64;
    Ok(f * f / (denom * denom))
}

/// Whether a representation has no variance left after centering.
pub(crate) fn is_degenerate(raw_norm: f64, centered: &Matrix) -> bool {
    let c = centered.frobenius_norm();
    c == 0.0 || c <= 1e-12 * raw_norm
}

/// Linear CKA; inputs are mean-centered here, so raw features are fine.
pub fn cka(fa: &Matrix, fb: &Matrix) -> Result<f64> {
    if fa.rows() != fb.rows() {
        return Err(Error::Shape {
            op: "cka",
            left: fa.shape(),
            right: fb.shape(),
        });
    }
    if !fa.is_finite() || !fb.is_finite() {
        return Err(Error::NonFinite("cka input".into()));
    }
    let ca = fa.center_columns();
    let cb = fb.center_columns();
    for (side, raw, c) in [("A", fa, &ca), ("B", fb, &cb)] {
        if is_degenerate(raw.frobenius_norm(), c) {
            return Err(Error::Degenerate(format!(
                "representation {side} is constant across samples; CKA undefined"
            )));
        }
    }
    let ab = hsic_linear(&ca, &cb)?;
    let aa = hsic_linear(&ca, &ca)?;
    let bb = hsic_linear(&cb, &cb)?;
    Ok((ab / (aa * bb).sqrt()).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;

    fn col(v: &[f64]) -> Matrix {
        Matrix::new(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn hsic_hand_values() {
        let a = col(&[1.0, -1.0]);
        assert_eq!(hsic_linear(&a, &a).unwrap(), 4.0);
        assert_eq!(hsic_linear(&a, &Matrix::zeros(2, 3)).unwrap(), 0.0);
        let u = col(&[1.0, -1.0, 0.0]);
        let v = col(&[1.0, 1.0, -2.0]);
        assert_eq!(hsic_linear(&u, &v).unwrap(), 0.0);
        assert_eq!(cka(&u, &v).unwrap(), 0.0);
        assert!(hsic_linear(&col(&[1.0]), &col(&[1.0])).is_err());
    }

    #[test]
    fn self_similarity() {
        let f = Rng::new(1).normal_matrix(50, 6);
        assert!((cka(&f, &f).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_input_is_degenerate() {
        let f = Rng::new(2).normal_matrix(10, 3);
        let c = Matrix::filled(10, 3, 0.1);
        assert!(matches!(cka(&f, &c), Err(Error::Degenerate(_))));
        assert!(matches!(cka(&Matrix::zeros(10, 2), &f), Err(Error::Degenerate(_))));
    }
}
