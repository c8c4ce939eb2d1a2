//! Task cross-entropy, symmetric InfoNCE and the λ-weighted objective.
//!
//! ```text
//! L_{A→B} = −(1/N) Σ_i log( exp(z_iᴬ·z_iᴮ/τ) / Σ_j exp(z_iᴬ·z_jᴮ/τ) )
//! L_align = (L_{A→B} + L_{B→A}) / 2
//! L_total = L_task,A + L_task,B + λ·L_align
//! ```
//!
//! The plain functions check their inputs and are used for evaluation. The
//! tape version [`total_loss_on`] is what training differentiates; at `λ = 0`
//! it leaves the alignment nodes disconnected from the total, so no alignment
//! gradient reaches any parameter.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numcore::matrix::dot;
use crate::numcore::{Matrix, NodeId, Tape};

pub const DEFAULT_TAU: f64 = 0.1;

/// Allowed deviation of an embedding row norm from 1.
pub const UNIT_NORM_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub task_a: f64,
    pub task_b: f64,
    pub align_a_to_b: f64,
    pub align_b_to_a: f64,
    pub align: f64,
    pub total: f64,
    pub lambda: f64,
    pub tau: f64,
}

impl LossBreakdown {
    pub fn task(&self) -> f64 {
        self.task_a + self.task_b
    }

    pub fn is_finite(&self) -> bool {
        [
            self.task_a,
            self.task_b,
            self.align_a_to_b,
            self.align_b_to_a,
            self.align,
            self.total,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("tau must be finite and > 0, got {tau}")))
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("lambda must be finite and >= 0, got {lambda}")))
    }
}

fn check_pair(za: &Matrix, zb: &Matrix) -> Result<()> {
    if za.shape() != zb.shape() || za.rows() == 0 {
        return Err(Error::Shape {
            op: "info_nce",
            left: za.shape(),
            right: zb.shape(),
        });
    }
    for (name, z) in [("zA", za), ("zB", zb)] {
        for i in 0..z.rows() {
            let n = dot(z.row(i), z.row(i)).sqrt();
            if !((n - 1.0).abs() <= UNIT_NORM_TOL) {
                return Err(invalid(format!("{name} row {i} has norm {n}, expected 1")));
            }
        }
    }
    Ok(())
}

/// Directional loss `L_{A→B}`: each row of `za` must pick out its partner
/// among all rows of `zb`.
pub fn info_nce(za: &Matrix, zb: &Matrix, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    check_pair(za, zb)?;
    Ok(info_nce_unchecked(za, zb, tau))
}

fn info_nce_unchecked(za: &Matrix, zb: &Matrix, tau: f64) -> f64 {
    let n = za.rows();
    let mut logits = vec![0.0; n];
    let mut total = 0.0;
    for i in 0..n {
        for (j, l) in logits.iter_mut().enumerate() {
            *l = dot(za.row(i), zb.row(j)) / tau;
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        total += lse - logits[i];
    }
    // Exact zero at N = 1 and never negative through rounding.
    (total / n as f64).max(0.0)
}

/// `(L_{A→B} + L_{B→A}) / 2`; swapping the arguments gives the same bits.
pub fn symmetric_align(za: &Matrix, zb: &Matrix, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    check_pair(za, zb)?;
    Ok((info_nce_unchecked(za, zb, tau) + info_nce_unchecked(zb, za, tau)) / 2.0)
}

/// Mean softmax cross-entropy.
pub fn cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    if logits.rows() != labels.len() || labels.is_empty() {
        return Err(invalid(format!(
            "cross_entropy: {} labels for {} rows",
            labels.len(),
            logits.rows()
        )));
    }
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        if y >= row.len() {
            return Err(invalid(format!("label {y} out of range at row {i}")));
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        total += lse - row[y];
    }
    Ok(total / labels.len() as f64)
}

pub fn total_loss(
    logits_a: &Matrix,
    logits_b: &Matrix,
    labels: &[usize],
    za: &Matrix,
    zb: &Matrix,
    lambda: f64,
    tau: f64,
) -> Result<LossBreakdown> {
    check_lambda(lambda)?;
    check_tau(tau)?;
    check_pair(za, zb)?;
    if za.rows() != labels.len() {
        return Err(invalid("embedding batch and label count differ"));
    }
    let task_a = cross_entropy(logits_a, labels)?;
    let task_b = cross_entropy(logits_b, labels)?;
    let ab = info_nce_unchecked(za, zb, tau);
    let ba = info_nce_unchecked(zb, za, tau);
    Ok(combine(task_a, task_b, ab, ba, lambda, tau))
}

fn combine(task_a: f64, task_b: f64, ab: f64, ba: f64, lambda: f64, tau: f64) -> LossBreakdown {
    let align = (ab + ba) / 2.0;
    let task = task_a + task_b;
    let total = if lambda == 0.0 { task } else { task + lambda * align };
    LossBreakdown {
        task_a,
        task_b,
        align_a_to_b: ab,
        align_b_to_a: ba,
        align,
        total,
        lambda,
        tau,
    }
}

/// Handles to the loss nodes recorded by [`total_loss_on`].
#[derive(Clone, Copy, Debug)]
pub struct LossNodes {
    pub task_a: NodeId,
    pub task_b: NodeId,
    /// `1×2` node `[A→B, B→A]`.
    pub align_pair: NodeId,
    pub align: NodeId,
    pub total: NodeId,
}

impl LossNodes {
    pub fn breakdown(&self, tape: &Tape, lambda: f64, tau: f64) -> LossBreakdown {
        let pair = tape.value(self.align_pair).data();
        LossBreakdown {
            task_a: tape.scalar(self.task_a),
            task_b: tape.scalar(self.task_b),
            align_a_to_b: pair[0],
            align_b_to_a: pair[1],
            align: tape.scalar(self.align),
            total: tape.scalar(self.total),
            lambda,
            tau,
        }
    }
}

/// Records the full objective. Similarities are `S = zA·zBᵀ`; the rows of
/// `S/τ` give `L_{A→B}` and its columns `L_{B→A}`.
#[allow(clippy::too_many_arguments)]
pub fn total_loss_on(
    tape: &mut Tape,
    logits_a: NodeId,
    logits_b: NodeId,
    labels: &[usize],
    za: NodeId,
    zb: NodeId,
    lambda: f64,
    tau: f64,
) -> Result<LossNodes> {
    check_lambda(lambda)?;
    check_tau(tau)?;
    let task_a = tape.softmax_cross_entropy(logits_a, labels)?;
    let task_b = tape.softmax_cross_entropy(logits_b, labels)?;
    let align_pair = tape.info_nce_pair(za, zb, tau)?;
    let align = tape.mean(align_pair);
    let task = tape.add(task_a, task_b)?;
    let total = if lambda == 0.0 {
        task
    } else {
        let weighted = tape.scale(align, lambda);
        tape.add(task, weighted)?
    };
    Ok(LossNodes {
        task_a,
        task_b,
        align_pair,
        align,
        total,
    })
}
