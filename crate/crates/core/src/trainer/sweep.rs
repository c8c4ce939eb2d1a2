//! The R × λ × seed grid.
//!
//! Each `(R, seed)` pair gets its own dataset, generated once and shared by
//! the λ runs of that pair; the model and shuffling seeds equal the run seed.
//! Groups are independent, so they run on a thread pool of `workers` threads
//! and the records are put back into `(R, λ, seed)` order afterwards.

use serde::{Deserialize, Serialize};

use super::{train, RunRecord, TrainConfig, LAMBDA_GRID};
use crate::error::{invalid, Error, Result};
use crate::syndata::{generate, GenSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub r_levels: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Label temperature of the generated datasets.
    pub data_tau: f64,
    pub n_total: usize,
    pub train: TrainConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            r_levels: (0..=8).collect(),
            lambdas: LAMBDA_GRID.to_vec(),
            seeds: vec![0, 1, 2, 3],
            data_tau: 1.0,
            n_total: GenSpec::new(0, 1.0, 0).n_total,
            train: TrainConfig::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r_levels.is_empty() || self.lambdas.is_empty() || self.seeds.is_empty() {
            return Err(invalid("sweep grids must be non-empty"));
        }
        for (i, &l) in self.lambdas.iter().enumerate() {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(invalid(format!("lambdas[{i}] = {l} must be finite and >= 0")));
            }
        }
        for &r in &self.r_levels {
            self.spec(r, 0).validate()?;
        }
        self.train.validate()
    }

    pub fn spec(&self, r: usize, seed: u64) -> GenSpec {
        GenSpec::new(r, self.data_tau, seed).with_total(self.n_total)
    }

    pub fn run_count(&self) -> usize {
        self.r_levels.len() * self.lambdas.len() * self.seeds.len()
    }
}

/// One grid cell; exactly one of `record` and `error` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub r: usize,
    pub lambda: f64,
    pub seed: u64,
    pub record: Option<RunRecord>,
    pub error: Option<String>,
}

impl SweepRecord {
    pub fn status(&self) -> &'static str {
        match &self.record {
            Some(r) => r.status(),
            None => "failed",
        }
    }
}

fn run_group(cfg: &SweepConfig, r: usize, seed: u64) -> Vec<SweepRecord> {
    let ds = generate(&cfg.spec(r, seed));
    cfg.lambdas
        .iter()
        .map(|&lambda| {
            let outcome = ds.as_ref().map_err(|e| e.to_string()).and_then(|ds| {
                let tc = TrainConfig {
                    lambda,
                    seed,
                    ..cfg.train.clone()
                };
                train(ds, &tc).map_err(|e| e.to_string())
            });
            let (record, error) = match outcome {
                Ok(rec) => (Some(rec), None),
                Err(e) => (None, Some(e)),
            };
            SweepRecord {
                r,
                lambda,
                seed,
                record,
                error,
            }
        })
        .collect()
}

/// Runs every grid cell. Individual failures are recorded, not raised.
/// `progress` is called once per finished `(R, seed)` group, in completion order.
pub fn sweep(
    cfg: &SweepConfig,
    workers: usize,
    progress: &(dyn Fn(&[SweepRecord]) + Sync),
) -> Result<Vec<SweepRecord>> {
    use rayon::prelude::*;

    cfg.validate()?;
    let groups: Vec<(usize, usize, u64)> = cfg
        .r_levels
        .iter()
        .enumerate()
        .flat_map(|(ri, &r)| cfg.seeds.iter().map(move |&s| (ri, r, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let done: Vec<Vec<SweepRecord>> = pool.install(|| {
        groups
            .par_iter()
            .map(|&(_, r, s)| {
                let recs = run_group(cfg, r, s);
                progress(&recs);
                recs
            })
            .collect()
    });

    // Reassemble in (R, λ, seed) order.
    let ns = cfg.seeds.len();
    let mut out = Vec::with_capacity(cfg.run_count());
    for ri in 0..cfg.r_levels.len() {
        for li in 0..cfg.lambdas.len() {
            for si in 0..ns {
                out.push(done[ri * ns + si][li].clone());
            }
        }
    }
    Ok(out)
}

/// Seed means of one `(R, λ)` cell over its successful runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub r: usize,
    pub lambda: f64,
    pub runs: usize,
    pub acc_a: f64,
    pub acc_b: f64,
    pub cka: f64,
    pub svcca: f64,
    pub mknn: f64,
}

impl SummaryRow {
    pub fn mean_acc(&self) -> f64 {
        (self.acc_a + self.acc_b) / 2.0
    }
}

/// Groups by `(R, λ)` in first-appearance order. Cells without a successful
/// run get NaN means and `runs = 0`.
pub fn summarize(records: &[SweepRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(usize, f64)> = Vec::new();
    for rec in records {
        if !keys
            .iter()
            .any(|&(r, l)| r == rec.r && l.to_bits() == rec.lambda.to_bits())
        {
            keys.push((rec.r, rec.lambda));
        }
    }
    keys.into_iter()
        .map(|(r, lambda)| {
            let runs: Vec<&RunRecord> = records
                .iter()
                .filter(|x| x.r == r && x.lambda.to_bits() == lambda.to_bits() && x.status() == "ok")
                .filter_map(|x| x.record.as_ref())
                .collect();
            let n = runs.len() as f64;
            let mean = |f: &dyn Fn(&RunRecord) -> f64| {
                if runs.is_empty() {
                    f64::NAN
                } else {
                    runs.iter().map(|x| f(x)).sum::<f64>() / n
                }
            };
            SummaryRow {
                r,
                lambda,
                runs: runs.len(),
                acc_a: mean(&|x| x.acc_a),
                acc_b: mean(&|x| x.acc_b),
                cka: mean(&|x| x.alignment.cka),
                svcca: mean(&|x| x.alignment.svcca),
                mknn: mean(&|x| x.alignment.mknn),
            }
        })
        .collect()
}
