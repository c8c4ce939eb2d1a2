//! Accuracy-vs-λ trend classification and rank correlation.
//!
//! For one R, let `a(λ)` be the seed-mean accuracy averaged over both
//! encoders, on the λ grid sorted ascending, and let `λ*` be the first grid
//! point where `a` is largest. With tolerance `t` (accuracy points):
//!
//! * `INTERIOR_PEAK`: `λ*` is neither grid endpoint and `a(λ*)` exceeds both
//!   endpoint values by more than `t`;
//! * otherwise `MONOTONE_UP` if `a(last) − a(first) > t`;
//! * otherwise `MONOTONE_DOWN` if `a(first) − a(last) > t`;
//! * otherwise `FLAT`.

use std::fmt;

use serde::Serialize;

use crate::results::CellSummary;

pub const DEFAULT_TOLERANCE: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Trend {
    MonotoneUp,
    MonotoneDown,
    InteriorPeak,
    Flat,
}

impl fmt::Display for Trend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Trend::MonotoneUp => "MONOTONE_UP",
            Trend::MonotoneDown => "MONOTONE_DOWN",
            Trend::InteriorPeak => "INTERIOR_PEAK",
            Trend::Flat => "FLAT",
        })
    }
}

/// Index of the first maximum; NaN entries never win.
pub fn first_argmax(xs: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in xs.iter().enumerate() {
        if !x.is_nan() && best.is_none_or(|b| x > xs[b]) {
            best = Some(i);
        }
    }
    best
}

/// Classifies accuracies (fractions in `[0, 1]`) listed in ascending λ order.
/// `tolerance` is in accuracy points.
pub fn classify(acc: &[f64], tolerance: f64) -> Trend {
    let t = tolerance / 100.0;
    let (Some(&first), Some(&last)) = (acc.first(), acc.last()) else {
        return Trend::Flat;
    };
    if let Some(p) = first_argmax(acc) {
        if p > 0 && p + 1 < acc.len() && acc[p] - first > t && acc[p] - last > t {
            return Trend::InteriorPeak;
        }
    }
    if last - first > t {
        Trend::MonotoneUp
    } else if first - last > t {
        Trend::MonotoneDown
    } else {
        Trend::Flat
    }
}

/// 1-based ranks; ties share their average rank.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Spearman rank correlation; NaN when either side is constant, contains a
/// NaN, or has fewer than two points.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "spearman needs equal lengths");
    if x.len() < 2 || x.iter().chain(y).any(|v| v.is_nan()) {
        return f64::NAN;
    }
    pearson(&ranks(x), &ranks(y))
}

/// Everything the report says about one redundancy level.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RTrend {
    pub r: usize,
    pub lambdas: Vec<f64>,
    pub acc_mean: Vec<f64>,
    pub acc_a: Vec<f64>,
    pub acc_b: Vec<f64>,
    pub cka: Vec<f64>,
    pub svcca: Vec<f64>,
    pub mknn: Vec<f64>,
    pub trend: Trend,
    pub peak_lambda: Option<f64>,
    pub spearman_cka: f64,
    pub spearman_svcca: f64,
    pub spearman_mknn: f64,
}

impl RTrend {
    /// Mean accuracy of both encoders at grid value `lambda`, if present.
    pub fn at(&self, lambda: f64) -> Option<(f64, f64)> {
        let i = self.lambdas.iter().position(|&l| l == lambda)?;
        Some((self.acc_a[i], self.acc_b[i]))
    }

    pub fn min_spearman(&self) -> f64 {
        [self.spearman_cka, self.spearman_svcca, self.spearman_mknn]
            .into_iter()
            .fold(f64::INFINITY, |m, v| {
                if v.is_nan() || m.is_nan() {
                    f64::NAN
                } else {
                    m.min(v)
                }
            })
    }
}

/// One entry per R in ascending order, cells sorted by λ.
pub fn analyze(cells: &[CellSummary], tolerance: f64) -> Vec<RTrend> {
    let mut rs: Vec<usize> = cells.iter().map(|c| c.r).collect();
    rs.sort_unstable();
    rs.dedup();
    rs.into_iter()
        .map(|r| {
            let mut cs: Vec<&CellSummary> = cells.iter().filter(|c| c.r == r).collect();
            cs.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
            let col = |f: fn(&CellSummary) -> f64| cs.iter().map(|c| f(c)).collect::<Vec<f64>>();
            let lambdas = col(|c| c.lambda);
            let acc_mean = col(CellSummary::acc_mean);
            let (cka, svcca, mknn) = (col(|c| c.cka), col(|c| c.svcca), col(|c| c.mknn));
            RTrend {
                r,
                trend: classify(&acc_mean, tolerance),
                peak_lambda: first_argmax(&acc_mean).map(|i| lambdas[i]),
                spearman_cka: spearman(&lambdas, &cka),
                spearman_svcca: spearman(&lambdas, &svcca),
                spearman_mknn: spearman(&lambdas, &mknn),
                acc_a: col(|c| c.acc_a),
                acc_b: col(|c| c.acc_b),
                lambdas,
                acc_mean,
                cka,
                svcca,
                mknn,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_on_constructed_curves() {
        assert_eq!(classify(&[0.60, 0.61, 0.62, 0.63, 0.64], 0.5), Trend::MonotoneUp);
        assert_eq!(classify(&[0.64, 0.63, 0.62, 0.61, 0.60], 0.5), Trend::MonotoneDown);
        assert_eq!(
            classify(&[0.60, 0.62, 0.66, 0.63, 0.61, 0.60, 0.58], 0.5),
            Trend::InteriorPeak
        );
        assert_eq!(classify(&[0.600, 0.602, 0.601, 0.603], 0.5), Trend::Flat);
        assert_eq!(classify(&[], 0.5), Trend::Flat);
    }

    #[test]
    fn rise_then_plateau_is_up() {
        assert_eq!(classify(&[0.60, 0.64, 0.66, 0.66, 0.659, 0.66], 0.5), Trend::MonotoneUp);
    }

    #[test]
    fn peak_needs_margin_over_both_endpoints() {
        // 0.4 points above the right end is inside the tolerance.
        assert_eq!(classify(&[0.60, 0.63, 0.626], 0.5), Trend::MonotoneUp);
        // Maximum at an endpoint is never a peak.
        assert_eq!(classify(&[0.70, 0.60, 0.65], 0.5), Trend::MonotoneDown);
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn spearman_values() {
        let x = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 2.0];
        assert_eq!(spearman(&x, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 70.0]), 1.0);
        assert_eq!(spearman(&x, &[7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0]), -1.0);
        // One adjacent swap among 7: 1 − 6·2 / (7·48).
        let s = spearman(&x, &[1.0, 2.0, 4.0, 3.0, 5.0, 6.0, 7.0]);
        assert!((s - (1.0 - 12.0 / 336.0)).abs() < 1e-15);
        assert!(spearman(&x, &[1.0; 7]).is_nan());
        assert!(spearman(&[0.0], &[1.0]).is_nan());
    }

    #[test]
    fn analyze_sorts_by_lambda() {
        let cell = |r, lambda: f64, acc: f64| CellSummary {
            r,
            lambda,
            runs: 4,
            acc_a: acc,
            acc_b: acc,
            cka: lambda,
            svcca: lambda,
            mknn: lambda,
        };
        let cells = vec![
            cell(4, 1.0, 0.60),
            cell(4, 0.0, 0.60),
            cell(4, 0.4, 0.65),
            cell(0, 0.0, 0.5),
        ];
        let t = analyze(&cells, DEFAULT_TOLERANCE);
        assert_eq!(t.len(), 2);
        assert_eq!(t[1].lambdas, vec![0.0, 0.4, 1.0]);
        assert_eq!(t[1].trend, Trend::InteriorPeak);
        assert_eq!(t[1].peak_lambda, Some(0.4));
        assert_eq!(t[1].min_spearman(), 1.0);
        assert_eq!(t[1].at(0.4), Some((0.65, 0.65)));
        assert!(t[0].min_spearman().is_nan());
    }
}
