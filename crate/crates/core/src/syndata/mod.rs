//! Synthetic two-modality data with a controlled redundancy level.
//!
//! Each modality is 12 binary features: an 8-dimensional block shared
//! verbatim by both modalities followed by a 4-dimensional block unique to
//! that modality. The label depends on exactly eight "relevant" features:
//! `R` drawn from the shared block, `⌊U/2⌋` from modality 1's unique block
//! and `⌈U/2⌉` from modality 2's, with `U = 8 − R`. Features outside the
//! selection act as noise. Labels are sampled from
//! `softmax(relevant · W / τ)` with `W` an 8×4 standard-normal matrix.
//!
//! Generation is a pure function of [`GenSpec`]; independent ChaCha
//! sub-streams of the spec seed drive feature bits, allocation, `W`, label
//! sampling and the split shuffle.

mod io;

use serde::{Deserialize, Serialize};

pub use io::{read_dataset, write_dataset, DATASET_MAGIC};

use crate::error::{invalid, Error, Result};
use crate::numcore::{Matrix, Rng};

pub const SHARED_DIM: usize = 8;
pub const UNIQUE_DIM: usize = 4;
pub const INPUT_DIM: usize = SHARED_DIM + UNIQUE_DIM;
pub const N_CLASSES: usize = 4;
pub const TOTAL_RELEVANT: usize = 8;

/// Documented temperature grid for label generation.
pub const TAU_GRID: [f64; 3] = [0.5, 1.0, 2.0];

const STREAM_FEATURES: u64 = 1;
const STREAM_ALLOCATION: u64 = 2;
const STREAM_WEIGHTS: u64 = 3;
const STREAM_LABELS: u64 = 4;
const STREAM_SPLIT: u64 = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenSpec {
    /// Redundancy: number of relevant features taken from the shared block.
    pub r: usize,
    pub tau: f64,
    pub seed: u64,
    pub n_total: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub shared_dim: usize,
    pub unique_dim: usize,
    pub n_classes: usize,
    pub total_relevant: usize,
}

impl Default for GenSpec {
    fn default() -> Self {
        Self {
            r: 4,
            tau: 1.0,
            seed: 0,
            n_total: 65_576,
            n_val: 9_828,
            n_test: 9_828,
            shared_dim: SHARED_DIM,
            unique_dim: UNIQUE_DIM,
            n_classes: N_CLASSES,
            total_relevant: TOTAL_RELEVANT,
        }
    }
}

impl GenSpec {
    pub fn new(r: usize, tau: f64, seed: u64) -> Self {
        Self {
            r,
            tau,
            seed,
            ..Self::default()
        }
    }

    /// Same spec with `n` samples; validation and test keep the default
    /// proportions (rounded down), so the default size is a fixed point.
    pub fn with_total(mut self, n: usize) -> Self {
        let d = Self::default();
        let share = |part: usize| (n as u128 * part as u128 / d.n_total as u128) as usize;
        self.n_total = n;
        self.n_val = share(d.n_val);
        self.n_test = share(d.n_test);
        self
    }

    pub fn uniqueness(&self) -> usize {
        self.total_relevant.saturating_sub(self.r)
    }

    pub fn n_train(&self) -> usize {
        self.n_total.saturating_sub(self.n_val + self.n_test)
    }

    pub fn validate(&self) -> Result<()> {
        if self.shared_dim != SHARED_DIM
            || self.unique_dim != UNIQUE_DIM
            || self.n_classes != N_CLASSES
            || self.total_relevant != TOTAL_RELEVANT
        {
            return Err(invalid(format!(
                "only the {SHARED_DIM}+{UNIQUE_DIM} feature layout with {N_CLASSES} classes \
                 and {TOTAL_RELEVANT} relevant features is supported"
            )));
        }
        if self.r > self.total_relevant || self.r > self.shared_dim {
            return Err(invalid(format!(
                "redundancy R must be in 0..={}, got {}",
                self.total_relevant, self.r
            )));
        }
        let u = self.uniqueness();
        if u / 2 > self.unique_dim || u.div_ceil(2) > self.unique_dim {
            return Err(invalid(format!(
                "uniqueness U = {u} does not fit two unique pools of {}",
                self.unique_dim
            )));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(invalid(format!("tau must be finite and > 0, got {}", self.tau)));
        }
        if self.n_val == 0 || self.n_test == 0 || self.n_val + self.n_test >= self.n_total {
            return Err(invalid(format!(
                "split sizes val={} test={} do not fit n_total={}",
                self.n_val, self.n_test, self.n_total
            )));
        }
        Ok(())
    }
}

/// Which pool positions feed the label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureAllocation {
    pub shared_idx: Vec<usize>,
    pub unique1_idx: Vec<usize>,
    pub unique2_idx: Vec<usize>,
}

impl FeatureAllocation {
    pub fn validate(&self, spec: &GenSpec) -> Result<()> {
        let u = spec.uniqueness();
        let check = |idx: &[usize], len: usize, pool: usize, name: &str| -> Result<()> {
            if idx.len() != len {
                return Err(invalid(format!("{name} has {} indices, expected {len}", idx.len())));
            }
            if idx.iter().any(|&i| i >= pool) || idx.windows(2).any(|w| w[0] >= w[1]) {
                return Err(invalid(format!(
                    "{name} must be strictly ascending indices below {pool}"
                )));
            }
            Ok(())
        };
        check(&self.shared_idx, spec.r, spec.shared_dim, "shared_idx")?;
        check(&self.unique1_idx, u / 2, spec.unique_dim, "unique1_idx")?;
        check(&self.unique2_idx, u.div_ceil(2), spec.unique_dim, "unique2_idx")
    }

    pub fn len(&self) -> usize {
        self.shared_idx.len() + self.unique1_idx.len() + self.unique2_idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Splits {
    pub fn get(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub spec: GenSpec,
    pub allocation: FeatureAllocation,
    /// `8×4` label weights.
    pub label_weights: Matrix,
    /// `n×12` binary, shared block first.
    pub x1: Matrix,
    pub x2: Matrix,
    pub y: Vec<usize>,
    pub splits: Splits,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// The eight label-generating features, ordered shared, unique1, unique2.
    pub fn relevant_features(&self) -> Matrix {
        relevant_features(&self.x1, &self.x2, &self.allocation)
    }

    /// Checks the structural invariants: shapes, shared-block identity,
    /// label range, disjoint exhaustive splits and class coverage.
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.allocation.validate(&self.spec)?;
        let n = self.spec.n_total;
        if self.x1.shape() != (n, INPUT_DIM) || self.x2.shape() != (n, INPUT_DIM) || self.y.len() != n {
            return Err(invalid("dataset shapes do not match spec"));
        }
        if self.label_weights.shape() != (TOTAL_RELEVANT, N_CLASSES) {
            return Err(invalid("label weights must be 8x4"));
        }
        for i in 0..n {
            if self.x1.row(i)[..SHARED_DIM] != self.x2.row(i)[..SHARED_DIM] {
                return Err(invalid(format!("shared block differs between modalities at row {i}")));
            }
        }
        if let Some(i) = self.y.iter().position(|&c| c >= N_CLASSES) {
            return Err(invalid(format!("label out of range at row {i}")));
        }
        let mut seen = vec![false; n];
        let sizes = [
            (&self.splits.train, self.spec.n_train()),
            (&self.splits.val, self.spec.n_val),
            (&self.splits.test, self.spec.n_test),
        ];
        for (idx, want) in sizes {
            if idx.len() != want {
                return Err(invalid(format!("split has {} rows, expected {want}", idx.len())));
            }
            let mut classes = [false; N_CLASSES];
            for &i in idx {
                if i >= n || seen[i] {
                    return Err(invalid(format!("split index {i} out of range or repeated")));
                }
                seen[i] = true;
                classes[self.y[i]] = true;
            }
            if classes.iter().any(|c| !c) {
                return Err(invalid("a class is missing from a split"));
            }
        }
        Ok(())
    }
}

/// Draws `R` shared, `⌊U/2⌋` modality-1 and `⌈U/2⌉` modality-2 pool
/// positions without replacement; each list is returned ascending.
pub fn allocate_features(spec: &GenSpec, rng: &mut Rng) -> Result<FeatureAllocation> {
    spec.validate()?;
    let u = spec.uniqueness();
    let mut pick = |pool: usize, k: usize| {
        let mut v = rng.sample_without_replacement(pool, k);
        v.sort_unstable();
        v
    };
    let shared_idx = pick(spec.shared_dim, spec.r);
    let unique1_idx = pick(spec.unique_dim, u / 2);
    let unique2_idx = pick(spec.unique_dim, u.div_ceil(2));
    Ok(FeatureAllocation {
        shared_idx,
        unique1_idx,
        unique2_idx,
    })
}

/// `n×8` matrix of relevant features pulled from the two modalities.
pub fn relevant_features(x1: &Matrix, x2: &Matrix, alloc: &FeatureAllocation) -> Matrix {
    let mut cols: Vec<(&Matrix, usize)> = Vec::with_capacity(TOTAL_RELEVANT);
    cols.extend(alloc.shared_idx.iter().map(|&j| (x1, j)));
    cols.extend(alloc.unique1_idx.iter().map(|&j| (x1, SHARED_DIM + j)));
    cols.extend(alloc.unique2_idx.iter().map(|&j| (x2, SHARED_DIM + j)));
    Matrix::from_fn(x1.rows(), cols.len(), |i, k| cols[k].0.get(i, cols[k].1))
}

/// Row-wise `softmax(features · W / τ)`.
pub fn label_probabilities(features: &Matrix, weights: &Matrix, tau: f64) -> Result<Matrix> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(invalid(format!("tau must be finite and > 0, got {tau}")));
    }
    let mut p = features.matmul(weights)?.scale(1.0 / tau);
    for i in 0..p.rows() {
        let row = p.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(p)
}

/// Samples one label per row from the tempered softmax.
pub fn generate_labels(features: &Matrix, weights: &Matrix, tau: f64, rng: &mut Rng) -> Result<Vec<usize>> {
    if features.data().iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(invalid("label features must be binary"));
    }
    let p = label_probabilities(features, weights, tau)?;
    Ok((0..p.rows()).map(|i| rng.categorical(p.row(i))).collect())
}

pub fn generate(spec: &GenSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let n = spec.n_total;

    let mut feat_rng = Rng::substream(spec.seed, STREAM_FEATURES);
    let shared = feat_rng.bernoulli(0.5, n, spec.shared_dim)?;
    let unique1 = feat_rng.bernoulli(0.5, n, spec.unique_dim)?;
    let unique2 = feat_rng.bernoulli(0.5, n, spec.unique_dim)?;
    let concat = |u: &Matrix| {
        Matrix::from_fn(n, INPUT_DIM, |i, j| {
            if j < SHARED_DIM {
                shared.get(i, j)
            } else {
                u.get(i, j - SHARED_DIM)
            }
        })
    };
    let x1 = concat(&unique1);
    let x2 = concat(&unique2);

    let allocation = allocate_features(spec, &mut Rng::substream(spec.seed, STREAM_ALLOCATION))?;
    let label_weights = Rng::substream(spec.seed, STREAM_WEIGHTS).normal_matrix(TOTAL_RELEVANT, N_CLASSES);
    let relevant = relevant_features(&x1, &x2, &allocation);
    let y = generate_labels(
        &relevant,
        &label_weights,
        spec.tau,
        &mut Rng::substream(spec.seed, STREAM_LABELS),
    )?;
    let splits = stratified_split(&y, spec, &mut Rng::substream(spec.seed, STREAM_SPLIT))?;

    let ds = SyntheticDataset {
        spec: spec.clone(),
        allocation,
        label_weights,
        x1,
        x2,
        y,
        splits,
    };
    debug_assert!(ds.validate().is_ok());
    Ok(ds)
}

/// Per-class shuffle, then exact val/test totals via largest-remainder
/// quotas; the rest of every class goes to train. Splits are returned sorted.
fn stratified_split(y: &[usize], spec: &GenSpec, rng: &mut Rng) -> Result<Splits> {
    let n = y.len();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); N_CLASSES];
    for (i, &c) in y.iter().enumerate() {
        by_class[c].push(i);
    }
    if let Some(c) = by_class.iter().position(|v| v.len() < 3) {
        return Err(Error::Degenerate(format!(
            "class {c} has {} samples; every split needs at least one",
            by_class[c].len()
        )));
    }
    let counts: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let val_q = quotas(&counts, n, spec.n_val);
    let test_q = quotas(&counts, n, spec.n_test);

    let mut splits = Splits {
        train: Vec::with_capacity(spec.n_train()),
        val: Vec::with_capacity(spec.n_val),
        test: Vec::with_capacity(spec.n_test),
    };
    for (c, idx) in by_class.iter_mut().enumerate() {
        let (v, t) = (val_q[c], test_q[c]);
        if v == 0 || t == 0 || v + t >= idx.len() {
            return Err(Error::Degenerate(format!(
                "class {c} ({} samples) cannot be represented in every split",
                idx.len()
            )));
        }
        rng.shuffle(idx);
        splits.val.extend_from_slice(&idx[..v]);
        splits.test.extend_from_slice(&idx[v..v + t]);
        splits.train.extend_from_slice(&idx[v + t..]);
    }
    splits.train.sort_unstable();
    splits.val.sort_unstable();
    splits.test.sort_unstable();
    Ok(splits)
}

/// Largest-remainder apportionment of `total` across classes by count;
/// ties go to the lower class index.
fn quotas(counts: &[usize], n: usize, total: usize) -> Vec<usize> {
    let mut q: Vec<usize> = counts.iter().map(|&c| c * total / n).collect();
    let mut rem: Vec<(usize, usize)> = counts.iter().enumerate().map(|(k, &c)| (c * total % n, k)).collect();
    rem.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let short = total - q.iter().sum::<usize>();
    for &(_, k) in rem.iter().take(short) {
        q[k] += 1;
    }
    q
}
