//! Command-line front end: dataset generation, training runs, sweeps,
//! metrics on external representations, PID of pmf files and trend reports.
//!
//! Exit codes: 0 on success, 1 for runtime or data errors, 2 for usage errors.

pub mod commands;
pub mod config;
pub mod results;
pub mod trend;

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Environment variable holding the default sweep worker count.
pub const WORKERS_ENV: &str = "ALIGNLAB_WORKERS";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(e) => write!(f, "error: {e:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<alignlab::Error> for CliError {
    fn from(e: alignlab::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

pub(crate) fn usage(e: impl fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

#[derive(Debug, Parser)]
#[command(
    name = "alignlab",
    version,
    about = "Cross-modal alignment experiments on synthetic data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset file.
    Gen(GenArgs),
    /// Train one model on a dataset file.
    Train(TrainArgs),
    /// Run the R × λ × seed grid and write results and summary CSVs.
    Sweep(SweepArgs),
    /// Alignment metrics between two representation CSV files.
    Metrics(MetricsArgs),
    /// Partial information decomposition of a pmf JSON file.
    Pid(PidArgs),
    /// Per-R accuracy and alignment trends from a results CSV.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// TOML manifest; its `[data]` table is the starting point.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_total: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Training flags shared by `train` and `sweep`.
#[derive(Debug, Default, Args)]
pub struct TrainOverrides {
    #[arg(long, allow_negative_numbers = true)]
    pub lr: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// InfoNCE temperature.
    #[arg(long, allow_negative_numbers = true)]
    pub temperature: Option<f64>,
    /// Mutual k-NN neighborhood size.
    #[arg(long)]
    pub knn_k: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub svcca_variance_keep: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset file written by `gen`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub train: TrainOverrides,
    /// Directory for `run.json` and `checkpoint.bin` (default: `[output].dir`).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, env = WORKERS_ENV)]
    pub workers: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub r_levels: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub lambdas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Label temperature of the generated datasets.
    #[arg(long, allow_negative_numbers = true)]
    pub data_tau: Option<f64>,
    #[arg(long)]
    pub n_total: Option<usize>,
    #[command(flatten)]
    pub train: TrainOverrides,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Skip the per-run JSON documents.
    #[arg(long)]
    pub no_run_json: bool,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Representation CSV of the first modality.
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub variance_keep: Option<f64>,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PidArgs {
    /// JSON object `{"sizes": [n1, n2, ny], "p": [...]}`, `p` in `(x1, x2, y)` row-major order.
    #[arg(long)]
    pub pmf: PathBuf,
    #[arg(long, default_value_t = alignlab::pid::DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = alignlab::pid::DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub results: PathBuf,
    /// Endpoint tolerance in accuracy points.
    #[arg(long, default_value_t = trend::DEFAULT_TOLERANCE)]
    pub tolerance: f64,
    /// Also write the per-R trends as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Train(a) => commands::train(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Metrics(a) => commands::metrics(a),
        Command::Pid(a) => commands::pid(a),
        Command::Report(a) => commands::report(a),
    }
}
