//! Representation similarity: linear CKA, SVCCA and mutual k-NN.
//!
//! [`alignment_report`] mean-centers both representations once and feeds the
//! same centered pair to all three metrics. CKA uses the centered features as
//! they are, SVCCA additionally z-scores them, and mutual k-NN measures
//! Euclidean distance between centered rows.

pub mod cka;
pub mod ingest;
pub mod mknn;
pub mod svcca;

use serde::{Deserialize, Serialize};

pub use cka::{cka, hsic_linear};
pub use ingest::{parse_matrix_csv, read_matrix_csv, write_matrix_csv};
pub use mknn::{knn_indices, mutual_knn, mutual_knn_count, DEFAULT_K};
pub use svcca::{svcca, svcca_detailed, SvccaResult, DEFAULT_VARIANCE_KEEP};

use crate::error::{invalid, Error, Result};
use crate::numcore::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct ReprPair {
    pub fa: Matrix,
    pub fb: Matrix,
    pub centered: bool,
}

impl ReprPair {
    pub fn new(fa: Matrix, fb: Matrix) -> Result<Self> {
        if fa.rows() != fb.rows() {
            return Err(Error::Shape {
                op: "repr_pair",
                left: fa.shape(),
                right: fb.shape(),
            });
        }
        if fa.rows() < 3 {
            return Err(invalid(format!("need at least 3 samples, got {}", fa.rows())));
        }
        if !fa.is_finite() || !fb.is_finite() {
            return Err(Error::NonFinite("representation".into()));
        }
        Ok(Self {
            fa,
            fb,
            centered: false,
        })
    }

    pub fn n(&self) -> usize {
        self.fa.rows()
    }

    pub fn centered(self) -> Self {
        if self.centered {
            return self;
        }
        Self {
            fa: self.fa.center_columns(),
            fb: self.fb.center_columns(),
            centered: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    pub k: usize,
    pub variance_keep: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            variance_keep: DEFAULT_VARIANCE_KEEP,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub cka: f64,
    pub svcca: f64,
    pub mknn: f64,
    pub k_used: usize,
    pub svcca_k: usize,
    pub n: usize,
}

pub fn alignment_report(pair: ReprPair, config: &MetricConfig) -> Result<AlignmentReport> {
    let pair = pair.centered();
    let c = cka(&pair.fa, &pair.fb)?;
    let s = svcca_detailed(&pair.fa, &pair.fb, config.variance_keep)?;
    let m = mutual_knn(&pair.fa, &pair.fb, config.k)?;
    Ok(AlignmentReport {
        cka: c,
        svcca: s.value,
        mknn: m,
        k_used: config.k,
        svcca_k: s.k(),
        n: pair.n(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;

    #[test]
    fn centering_flag() {
        let mut rng = Rng::new(1);
        let p = ReprPair::new(rng.normal_matrix(20, 3), rng.normal_matrix(20, 4))
            .unwrap()
            .centered();
        assert!(p.centered);
        for m in p.fa.column_means().iter().chain(&p.fb.column_means()) {
            assert!(m.abs() <= 1e-9);
        }
    }

    #[test]
    fn pair_validation() {
        assert!(ReprPair::new(Matrix::zeros(2, 1), Matrix::zeros(2, 1)).is_err());
        assert!(ReprPair::new(Matrix::zeros(4, 1), Matrix::zeros(5, 1)).is_err());
    }

    #[test]
    fn self_report() {
        let f = Rng::new(2).normal_matrix(60, 5);
        let r = alignment_report(ReprPair::new(f.clone(), f).unwrap(), &MetricConfig::default()).unwrap();
        assert!((r.cka - 1.0).abs() < 1e-12);
        assert!((r.svcca - 1.0).abs() < 1e-6);
        assert_eq!(r.mknn, 1.0);
        assert_eq!((r.k_used, r.n), (10, 60));
    }
}
