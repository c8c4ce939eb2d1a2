//! Mini-batch AdamW training of the two-encoder model, evaluation and sweeps.
//!
//! A run is a pure function of the dataset and [`TrainConfig`]: the model is
//! initialized from `cfg.seed`, epoch `e` shuffles the training split with a
//! generator seeded from `mix_seed(cfg.seed, e)`, and dropout masks come from
//! a separate stream of the same seed. The untrained model is scored as epoch
//! 0; afterwards the state with the best mean validation accuracy of the two
//! encoders wins, earliest epoch on ties.

mod gradcheck;
mod sweep;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use gradcheck::{gradient_check, Batch, GradCheckConfig, GradCheckReport};
pub use sweep::{summarize, sweep, SummaryRow, SweepConfig, SweepRecord};

use crate::error::{invalid, Error, Result};
use crate::losses::{total_loss_on, LossBreakdown, DEFAULT_TAU};
use crate::model::{Modality, ModelConfig, ModelState};
use crate::numcore::rng::mix_seed;
use crate::numcore::{AdamWConfig, AdamWState, Matrix, Rng, Tape};
use crate::simmetrics::{alignment_report, AlignmentReport, MetricConfig, ReprPair};
use crate::syndata::{GenSpec, Split, SyntheticDataset};

pub const LAMBDA_GRID: [f64; 7] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 2.0];
pub const LR_GRID: [f64; 3] = [1e-4, 1e-3, 1e-2];

const STREAM_DROPOUT: u64 = 201;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub seed: u64,
    pub eval_every: usize,
    pub tau: f64,
    pub model: ModelConfig,
    pub metrics: MetricConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            lr: 1e-3,
            weight_decay: 1e-4,
            batch_size: 512,
            epochs: 50,
            patience: 10,
            seed: 0,
            eval_every: 1,
            tau: DEFAULT_TAU,
            model: ModelConfig::default(),
            metrics: MetricConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(invalid(format!("tau must be finite and > 0, got {}", self.tau)));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be positive"));
        }
        if self.eval_every == 0 {
            return Err(invalid("eval_every must be positive"));
        }
        self.adamw().validate()?;
        self.model.validate()
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }

    /// With one sample per batch the alignment loss has no negatives.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.batch_size < 2 && self.lambda > 0.0 {
            w.push("batch_size 1 gives the alignment loss no negatives; it is identically 0".into());
        }
        w
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Sample-weighted mean of the per-batch losses.
    pub train: LossBreakdown,
    pub val_acc_a: Option<f64>,
    pub val_acc_b: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: TrainConfig,
    pub spec: GenSpec,
    pub epochs: Vec<EpochLog>,
    /// Epoch of the selected state; 0 is the untrained model.
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub acc_a: f64,
    pub acc_b: f64,
    pub alignment: AlignmentReport,
    /// Epoch in which a non-finite loss or parameter appeared.
    pub diverged_at: Option<usize>,
    pub wall_time: f64,
    pub checkpoint: Option<String>,
}

impl RunRecord {
    /// Training losses of the selected epoch, or `None` for the untrained state.
    pub fn selected_losses(&self) -> Option<&LossBreakdown> {
        self.epochs
            .iter()
            .find(|e| e.epoch == self.best_epoch)
            .map(|e| &e.train)
    }

    pub fn status(&self) -> &'static str {
        if self.diverged_at.is_some() {
            "diverged"
        } else {
            "ok"
        }
    }
}

/// Fraction of argmax-correct predictions for each encoder on `split`.
pub fn evaluate(state: &ModelState, ds: &SyntheticDataset, split: Split) -> Result<(f64, f64)> {
    let idx = ds.splits.get(split);
    if idx.is_empty() {
        return Err(invalid(format!("split {split:?} is empty")));
    }
    let labels: Vec<usize> = idx.iter().map(|&i| ds.y[i]).collect();
    let mut acc = [0.0; 2];
    for (m, x) in [(Modality::A, &ds.x1), (Modality::B, &ds.x2)] {
        let h = state.encode(m, &x.select_rows(idx))?;
        let logits = state.classify(m, &h)?;
        acc[m as usize] = accuracy(&logits, &labels);
    }
    Ok((acc[0], acc[1]))
}

pub fn accuracy(logits: &Matrix, labels: &[usize]) -> f64 {
    let correct = labels
        .iter()
        .enumerate()
        .filter(|&(i, &y)| argmax(logits.row(i)) == y)
        .count();
    correct as f64 / labels.len() as f64
}

/// First index of the maximum; NaN never wins.
fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] || row[best].is_nan() {
            best = j;
        }
    }
    best
}

/// Centered pre-projection test representations of both encoders.
pub fn test_alignment(state: &ModelState, ds: &SyntheticDataset, metrics: &MetricConfig) -> Result<AlignmentReport> {
    let idx = ds.splits.get(Split::Test);
    let fa = state.encode(Modality::A, &ds.x1.select_rows(idx))?;
    let fb = state.encode(Modality::B, &ds.x2.select_rows(idx))?;
    alignment_report(ReprPair::new(fa, fb)?, metrics)
}

/// One optimizer step on the samples `idx`. Returns the batch losses; the
/// parameters are left untouched when the loss is not finite.
fn train_step(
    state: &mut ModelState,
    opt: &mut AdamWState,
    ds: &SyntheticDataset,
    idx: &[usize],
    cfg: &TrainConfig,
    dropout: &mut Rng,
) -> Result<LossBreakdown> {
    let labels: Vec<usize> = idx.iter().map(|&i| ds.y[i]).collect();
    let mut tape = Tape::new();
    let p = state.bind(&mut tape);
    let mut out = Vec::with_capacity(2);
    for (m, x) in [(Modality::A, &ds.x1), (Modality::B, &ds.x2)] {
        let x = tape.constant(x.select_rows(idx));
        let h = state.encode_on(&mut tape, &p, m, x)?;
        let logits = state.classify_on(&mut tape, &p, m, h)?;
        let z = state.project_on(&mut tape, &p, m, h, Some(dropout))?;
        out.push((logits, z));
    }
    let nodes = total_loss_on(
        &mut tape, out[0].0, out[1].0, &labels, out[0].1, out[1].1, cfg.lambda, cfg.tau,
    )?;
    let losses = nodes.breakdown(&tape, cfg.lambda, cfg.tau);
    if !losses.is_finite() {
        return Ok(losses);
    }
    let mut grads = tape.backward(nodes.total)?;
    let shapes: Vec<_> = state.params().iter().map(|m| m.shape()).collect();
    let g: Vec<Matrix> = p
        .ids()
        .iter()
        .zip(shapes)
        .map(|(&id, s)| grads.take_or_zeros(id, s))
        .collect();
    opt.step(&mut state.params_mut(), &g)?;
    Ok(losses)
}

fn accumulate(sum: &mut LossBreakdown, b: &LossBreakdown, w: f64) {
    sum.task_a += w * b.task_a;
    sum.task_b += w * b.task_b;
    sum.align_a_to_b += w * b.align_a_to_b;
    sum.align_b_to_a += w * b.align_b_to_a;
    sum.align += w * b.align;
    sum.total += w * b.total;
}

/// Trains one model and returns the record together with the selected state.
pub fn train_with_state(ds: &SyntheticDataset, cfg: &TrainConfig) -> Result<(RunRecord, ModelState)> {
    let started = Instant::now();
    cfg.validate()?;
    if cfg.model.encoder.input_dim != ds.x1.cols() || ds.x1.cols() != ds.x2.cols() {
        return Err(Error::Shape {
            op: "train",
            left: ds.x1.shape(),
            right: (ds.x2.rows(), cfg.model.encoder.input_dim),
        });
    }
    let mut state = ModelState::init(&cfg.model, cfg.seed)?;
    let mut opt = AdamWState::new(cfg.adamw(), &state.params())?;
    let mut dropout = Rng::substream(cfg.seed, STREAM_DROPOUT);
    let mut order = ds.splits.get(Split::Train).to_vec();
    if order.is_empty() {
        return Err(invalid("training split is empty"));
    }

    let (va, vb) = evaluate(&state, ds, Split::Val)?;
    let mut best = (0usize, (va + vb) / 2.0, state.clone());
    let mut logs = Vec::with_capacity(cfg.epochs);
    let mut diverged_at = None;

    'epochs: for epoch in 1..=cfg.epochs {
        let mut shuffle = Rng::new(mix_seed(cfg.seed, epoch as u64));
        shuffle.shuffle(&mut order);
        let mut sum = LossBreakdown {
            lambda: cfg.lambda,
            tau: cfg.tau,
            ..Default::default()
        };
        for chunk in order.chunks(cfg.batch_size) {
            let b = train_step(&mut state, &mut opt, ds, chunk, cfg, &mut dropout)?;
            if !b.is_finite() || !state.is_finite() {
                diverged_at = Some(epoch);
                break 'epochs;
            }
            accumulate(&mut sum, &b, chunk.len() as f64 / order.len() as f64);
        }
        let mut log = EpochLog {
            epoch,
            train: sum,
            val_acc_a: None,
            val_acc_b: None,
        };
        if epoch % cfg.eval_every == 0 || epoch == cfg.epochs {
            let (a, b) = evaluate(&state, ds, Split::Val)?;
            log.val_acc_a = Some(a);
            log.val_acc_b = Some(b);
            if (a + b) / 2.0 > best.1 {
                best = (epoch, (a + b) / 2.0, state.clone());
            }
        }
        logs.push(log);
        if cfg.patience > 0 && epoch - best.0 >= cfg.patience {
            break;
        }
    }

    let (best_epoch, best_val_acc, state) = best;
    let (acc_a, acc_b) = evaluate(&state, ds, Split::Test)?;
    let alignment = test_alignment(&state, ds, &cfg.metrics)?;
    let record = RunRecord {
        config: cfg.clone(),
        spec: ds.spec.clone(),
        epochs: logs,
        best_epoch,
        best_val_acc,
        acc_a,
        acc_b,
        alignment,
        diverged_at,
        wall_time: started.elapsed().as_secs_f64(),
        checkpoint: None,
    };
    Ok((record, state))
}

pub fn train(ds: &SyntheticDataset, cfg: &TrainConfig) -> Result<RunRecord> {
    Ok(train_with_state(ds, cfg)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syndata::generate;

    fn small(r: usize, seed: u64) -> SyntheticDataset {
        generate(&GenSpec::new(r, 1.0, seed).with_total(4000)).unwrap()
    }

    fn quick(lambda: f64) -> TrainConfig {
        TrainConfig {
            lambda,
            lr: 1e-2,
            batch_size: 128,
            epochs: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_is_untrained_model() {
        let ds = small(8, 1);
        let cfg = TrainConfig {
            epochs: 0,
            ..quick(0.0)
        };
        let (rec, state) = train_with_state(&ds, &cfg).unwrap();
        assert_eq!(rec.best_epoch, 0);
        assert!(rec.epochs.is_empty());
        assert_eq!(state, ModelState::init(&cfg.model, cfg.seed).unwrap());
        assert_eq!(evaluate(&state, &ds, Split::Test).unwrap(), (rec.acc_a, rec.acc_b));
    }

    #[test]
    fn learns_above_chance() {
        let ds = small(8, 2);
        let rec = train(&ds, &quick(0.0)).unwrap();
        assert!(rec.acc_a > 0.3 && rec.acc_b > 0.3, "{} {}", rec.acc_a, rec.acc_b);
        assert!(rec.best_epoch > 0);
    }

    #[test]
    fn deterministic() {
        let ds = small(4, 3);
        let mut a = train(&ds, &quick(0.5)).unwrap();
        let mut b = train(&ds, &quick(0.5)).unwrap();
        a.wall_time = 0.0;
        b.wall_time = 0.0;
        assert_eq!(a, b);
    }

    #[test]
    fn zero_lambda_still_logs_alignment() {
        let ds = small(4, 4);
        let rec = train(&ds, &quick(0.0)).unwrap();
        let l = &rec.epochs[0].train;
        assert!(l.align > 0.0);
        assert!((l.total - l.task()).abs() < 1e-12);
    }

    #[test]
    fn divergence_keeps_finite_state() {
        let ds = small(8, 5);
        let cfg = TrainConfig {
            lr: 1e300,
            ..quick(1.0)
        };
        let rec = train(&ds, &cfg).unwrap();
        assert_eq!(rec.diverged_at, Some(1));
        assert_eq!(rec.best_epoch, 0);
        assert!(rec.acc_a.is_finite());
    }

    #[test]
    fn accuracy_edges() {
        let logits = Matrix::from_rows(&[vec![0.0, 1.0], vec![2.0, 1.0]]).unwrap();
        assert_eq!(accuracy(&logits, &[1, 0]), 1.0);
        assert_eq!(accuracy(&Matrix::zeros(4, 4), &[0, 1, 2, 3]), 0.25);
        assert_eq!(argmax(&[f64::NAN, 1.0]), 1);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig {
            lambda: -1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            batch_size: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        let one = TrainConfig {
            batch_size: 1,
            lambda: 1.0,
            ..Default::default()
        };
        assert_eq!(one.warnings().len(), 1);
    }
}
