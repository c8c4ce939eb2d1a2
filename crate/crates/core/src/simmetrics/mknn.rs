//! Mutual k-nearest-neighbour agreement.
//!
//! `α(i, j) = 1` when `j` is among the `k` nearest neighbours of `i` in both
//! representations (`j ≠ i`). The score is `Σ α / (n·k)`: with the sample
//! itself excluded every neighbourhood has exactly `k` members, so each
//! self-agreement `Align(A, A)` equals `n·k`.
//!
//! Neighbours are ranked by squared Euclidean distance, computed from
//! explicit differences, with ties broken by ascending row index.

use crate::error::{invalid, Error, Result};
use crate::numcore::Matrix;

pub const DEFAULT_K: usize = 10;

fn check(fa: &Matrix, fb: &Matrix, k: usize) -> Result<()> {
    if fa.rows() != fb.rows() {
        return Err(Error::Shape {
            op: "mutual_knn",
            left: fa.shape(),
            right: fb.shape(),
        });
    }
    let n = fa.rows();
    if k == 0 || k + 1 > n {
        return Err(invalid(format!("k must be in 1..={}, got {k}", n.saturating_sub(1))));
    }
    if !fa.is_finite() || !fb.is_finite() {
        return Err(Error::NonFinite("mutual_knn input".into()));
    }
    Ok(())
}

/// The `k` nearest neighbours of every row, each list sorted by index.
pub fn knn_indices(f: &Matrix, k: usize) -> Result<Vec<Vec<usize>>> {
    check(f, f, k)?;
    let n = f.rows();
    // Column-major copy so that distances to all rows accumulate one
    // coordinate at a time, in the same order as a per-pair sum.
    let ft = f.transpose();
    let mut dist = vec![0.0f64; n];
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        dist.iter_mut().for_each(|d| *d = 0.0);
        for (c, &x) in f.row(i).iter().enumerate() {
            for (d, &y) in dist.iter_mut().zip(ft.row(c)) {
                let diff = x - y;
                *d += diff * diff;
            }
        }
        // Scanning j upward means an equal distance never beats a kept entry.
        best.clear();
        for (j, &d) in dist.iter().enumerate() {
            if j == i || (best.len() == k && d >= best[k - 1].0) {
                continue;
            }
            let pos = best.partition_point(|e| e.0 <= d);
            best.insert(pos, (d, j));
            best.truncate(k);
        }
        let mut nn: Vec<usize> = best.iter().map(|p| p.1).collect();
        nn.sort_unstable();
        out.push(nn);
    }
    Ok(out)
}

/// Raw agreement count `Σ_i Σ_{j≠i} α(i, j)`.
pub fn mutual_knn_count(fa: &Matrix, fb: &Matrix, k: usize) -> Result<usize> {
    check(fa, fb, k)?;
    let na = knn_indices(fa, k)?;
    let nb = knn_indices(fb, k)?;
    Ok(na.iter().zip(&nb).map(|(a, b)| sorted_overlap(a, b)).sum())
}

fn sorted_overlap(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut c) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                c += 1;
                i += 1;
                j += 1;
            }
        }
    }
    c
}

/// Normalized score in `[0, 1]`.
pub fn mutual_knn(fa: &Matrix, fb: &Matrix, k: usize) -> Result<f64> {
    let count = mutual_knn_count(fa, fb, k)?;
    Ok(count as f64 / (fa.rows() * k) as f64)
}
