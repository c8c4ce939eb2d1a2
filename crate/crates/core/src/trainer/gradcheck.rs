//! Tape gradients of the total loss against central finite differences.
//!
//! The numeric side uses the plain (non-tape) forward functions. A probe is
//! skipped when nudging the parameter by `±h` flips the sign of any ReLU
//! input, since the loss is not differentiable across that kink. The error of
//! one probe is `|g − ĝ| / max(|g|, |ĝ|, floor)`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::losses::{total_loss, total_loss_on};
use crate::model::{Linear, Modality, ModelState};
use crate::numcore::{Matrix, Rng, Tape};

#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub x1: Matrix,
    pub x2: Matrix,
    pub labels: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub lambda: f64,
    pub tau: f64,
    /// Probes drawn from each parameter matrix (all entries if smaller).
    pub probes_per_param: usize,
    pub step: f64,
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            tau: 0.1,
            probes_per_param: 6,
            step: 1e-5,
            floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped_kinks: usize,
    /// `(parameter name, flat index)` of the worst probe.
    pub worst: Option<(String, usize)>,
}

fn loss(state: &ModelState, batch: &Batch, cfg: &GradCheckConfig) -> Result<f64> {
    let mut out = Vec::with_capacity(2);
    for (m, x) in [(Modality::A, &batch.x1), (Modality::B, &batch.x2)] {
        let h = state.encode(m, x)?;
        out.push((state.classify(m, &h)?, state.project(m, &h)?));
    }
    let b = total_loss(
        &out[0].0,
        &out[1].0,
        &batch.labels,
        &out[0].1,
        &out[1].1,
        cfg.lambda,
        cfg.tau,
    )?;
    Ok(b.total)
}

/// Signs of every ReLU input in the forward pass.
fn relu_pattern(state: &ModelState, batch: &Batch) -> Result<Vec<bool>> {
    let mut signs = Vec::new();
    let record = |layers: &[Linear], x: &Matrix, relu_last: bool, signs: &mut Vec<bool>| -> Result<Matrix> {
        let mut h = x.clone();
        for (k, l) in layers.iter().enumerate() {
            let pre = l.forward(&h)?;
            if relu_last || k + 1 < layers.len() {
                signs.extend(pre.data().iter().map(|&v| v > 0.0));
                h = pre.map(|v| v.max(0.0));
            } else {
                h = pre;
            }
        }
        Ok(h)
    };
    for (enc, proj, x) in [
        (&state.encoder_a, &state.proj_a, &batch.x1),
        (&state.encoder_b, &state.proj_b, &batch.x2),
    ] {
        let h = record(enc, x, true, &mut signs)?;
        record(proj, &h, false, &mut signs)?;
    }
    Ok(signs)
}

pub fn gradient_check(state: &ModelState, batch: &Batch, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let n = batch.labels.len();
    if n == 0 || batch.x1.rows() != n || batch.x2.rows() != n {
        return Err(invalid("batch rows and label count must agree and be non-empty"));
    }
    let mut tape = Tape::new();
    let p = state.bind(&mut tape);
    let mut out = Vec::with_capacity(2);
    for (m, x) in [(Modality::A, &batch.x1), (Modality::B, &batch.x2)] {
        let x = tape.constant(x.clone());
        let h = state.encode_on(&mut tape, &p, m, x)?;
        let logits = state.classify_on(&mut tape, &p, m, h)?;
        let z = state.project_on(&mut tape, &p, m, h, None)?;
        out.push((logits, z));
    }
    let nodes = total_loss_on(
        &mut tape,
        out[0].0,
        out[1].0,
        &batch.labels,
        out[0].1,
        out[1].1,
        cfg.lambda,
        cfg.tau,
    )?;
    let mut grads = tape.backward(nodes.total)?;
    let analytic: Vec<Matrix> = p
        .ids()
        .iter()
        .zip(state.params())
        .map(|(&id, m)| grads.take_or_zeros(id, m.shape()))
        .collect();

    let base_pattern = relu_pattern(state, batch)?;
    let names = state.param_names();
    let mut rng = Rng::new(cfg.seed);
    let mut probe = state.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped_kinks: 0,
        worst: None,
    };
    for (k, g) in analytic.iter().enumerate() {
        let len = g.data().len();
        let picks = if len <= cfg.probes_per_param {
            (0..len).collect()
        } else {
            rng.sample_without_replacement(len, cfg.probes_per_param)
        };
        for idx in picks {
            let orig = probe.params()[k].data()[idx];
            let mut eval = |v: f64| -> Result<(f64, bool)> {
                probe.params_mut()[k].data_mut()[idx] = v;
                let same = relu_pattern(&probe, batch)? == base_pattern;
                Ok((loss(&probe, batch, cfg)?, same))
            };
            let (up, same_up) = eval(orig + cfg.step)?;
            let (down, same_down) = eval(orig - cfg.step)?;
            probe.params_mut()[k].data_mut()[idx] = orig;
            if !(same_up && same_down) {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (up - down) / (2.0 * cfg.step);
            let a = g.data()[idx];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(cfg.floor);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((names[k].clone(), idx));
            }
        }
    }
    Ok(report)
}
