//! Experiment manifests.
//!
//! A manifest is one TOML file. Every table and key is optional, missing keys
//! take the defaults below, and unknown keys are rejected.
//!
//! ```toml
//! [data]            # dataset recipe used by `gen` and by every sweep cell
//! r = 4
//! tau = 1.0
//! seed = 0
//! n_total = 65576
//!
//! [train]           # lambda, lr, weight_decay, batch_size, epochs, patience,
//! lr = 1e-3         # seed, eval_every, tau
//!
//! [train.model.encoder]     # input_dim, hidden_dim, depth, activation
//! [train.model.projection]  # enabled, out_dim, depth, dropout
//! [train.metrics]           # k, variance_keep
//!
//! [sweep]
//! r_levels = [0, 1, 2, 3, 4, 5, 6, 7, 8]
//! lambdas = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 2.0]
//! seeds = [0, 1, 2, 3]
//!
//! [output]
//! dir = "results"
//! ```
//!
//! Command-line flags are applied on top of the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use alignlab::syndata::GenSpec;
use alignlab::trainer::{SweepConfig, TrainConfig, LAMBDA_GRID};
use anyhow::Context;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub r: usize,
    pub tau: f64,
    pub seed: u64,
    pub n_total: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        let d = GenSpec::default();
        Self {
            r: d.r,
            tau: d.tau,
            seed: d.seed,
            n_total: d.n_total,
        }
    }
}

impl DataSection {
    pub fn spec(&self) -> GenSpec {
        GenSpec::new(self.r, self.tau, self.seed).with_total(self.n_total)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub r_levels: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            r_levels: (0..=8).collect(),
            lambdas: LAMBDA_GRID.to_vec(),
            seeds: vec![0, 1, 2, 3],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("results"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSection,
    pub train: TrainConfig,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// The manifest at `path`, or the defaults.
    pub fn load_or_default(path: Option<&Path>) -> anyhow::Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// The sweep grid; datasets use `data.tau` and `data.n_total`.
    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            r_levels: self.sweep.r_levels.clone(),
            lambdas: self.sweep.lambdas.clone(),
            seeds: self.sweep.seeds.clone(),
            data_tau: self.data.tau,
            n_total: self.data.n_total,
            train: self.train.clone(),
        }
    }
}
