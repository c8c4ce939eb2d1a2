//! The six subcommands.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use alignlab::model::write_checkpoint;
use alignlab::pid::{broja_decompose_with, JointPmf};
use alignlab::simmetrics::{alignment_report, read_matrix_csv, MetricConfig, ReprPair};
use alignlab::syndata::{generate, read_dataset, write_dataset};
use alignlab::trainer::{self, RunRecord, SweepRecord, TrainConfig};
use alignlab::Error;
use anyhow::Context;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::results::{read_results, summarize_rows, write_results, write_summary, ResultRow};
use crate::trend::analyze;
use crate::{usage, CliError, GenArgs, MetricsArgs, PidArgs, ReportArgs, SweepArgs, TrainArgs, TrainOverrides};

/// Reading the manifest can fail at runtime; a manifest that does not parse
/// is a usage error.
fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    let Some(path) = path else {
        return Ok(ExperimentConfig::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ExperimentConfig::parse(&text).map_err(|e| usage(format!("{}: {e:#}", path.display())))
}

fn apply(t: &mut TrainConfig, o: &TrainOverrides) {
    if let Some(v) = o.lr {
        t.lr = v;
    }
    if let Some(v) = o.weight_decay {
        t.weight_decay = v;
    }
    if let Some(v) = o.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = o.epochs {
        t.epochs = v;
    }
    if let Some(v) = o.patience {
        t.patience = v;
    }
    if let Some(v) = o.temperature {
        t.tau = v;
    }
    if let Some(v) = o.knn_k {
        t.metrics.k = v;
    }
    if let Some(v) = o.svcca_variance_keep {
        t.metrics.variance_keep = v;
    }
}

fn validate_metrics(m: &MetricConfig) -> Result<(), CliError> {
    if m.k == 0 {
        return Err(usage("knn k must be positive"));
    }
    if !(m.variance_keep > 0.0 && m.variance_keep <= 1.0) {
        return Err(usage(format!(
            "variance_keep must be in (0, 1], got {}",
            m.variance_keep
        )));
    }
    Ok(())
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(v).map_err(anyhow::Error::from)?)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn print(text: &str) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    writeln!(out, "{text}")?;
    Ok(())
}

pub fn gen(a: GenArgs) -> Result<(), CliError> {
    let mut data = load_config(a.config.as_deref())?.data;
    if let Some(v) = a.r {
        data.r = v;
    }
    if let Some(v) = a.tau {
        data.tau = v;
    }
    if let Some(v) = a.seed {
        data.seed = v;
    }
    if let Some(v) = a.n_total {
        data.n_total = v;
    }
    let spec = data.spec();
    spec.validate().map_err(usage)?;
    let ds = generate(&spec)?;
    write_dataset(&ds, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    print(&to_json(&json!({
        "out": a.out,
        "spec": spec,
        "splits": {
            "train": ds.splits.train.len(),
            "val": ds.splits.val.len(),
            "test": ds.splits.test.len(),
        },
    }))?)
}

/// The deterministic part of a run record.
fn run_summary(rec: &RunRecord) -> serde_json::Value {
    json!({
        "status": rec.status(),
        "lambda": rec.config.lambda,
        "seed": rec.config.seed,
        "best_epoch": rec.best_epoch,
        "epochs_run": rec.epochs.len(),
        "best_val_acc": rec.best_val_acc,
        "acc_a": rec.acc_a,
        "acc_b": rec.acc_b,
        "alignment": rec.alignment,
        "selected_losses": rec.selected_losses(),
        "diverged_at": rec.diverged_at,
    })
}

pub fn train(a: TrainArgs) -> Result<(), CliError> {
    let cfg = load_config(a.config.as_deref())?;
    let mut tc = cfg.train.clone();
    if let Some(v) = a.lambda {
        tc.lambda = v;
    }
    if let Some(v) = a.seed {
        tc.seed = v;
    }
    apply(&mut tc, &a.train);
    tc.validate().map_err(usage)?;
    validate_metrics(&tc.metrics)?;
    for w in tc.warnings() {
        eprintln!("warning: {w}");
    }

    let ds = read_dataset(&a.data).with_context(|| format!("reading dataset {}", a.data.display()))?;
    let (mut rec, state) = trainer::train_with_state(&ds, &tc)?;
    let dir = a.out_dir.unwrap_or(cfg.output.dir);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write_checkpoint(&state, dir.join("checkpoint.bin"))?;
    rec.checkpoint = Some("checkpoint.bin".into());
    write_file(&dir.join("run.json"), &to_json(&rec)?)?;
    if let Some(e) = rec.diverged_at {
        eprintln!("warning: training diverged in epoch {e}; the best finite state was kept");
    }
    print(&to_json(&run_summary(&rec))?)
}

fn run_file_name(r: &SweepRecord) -> String {
    format!("R{}_lambda{}_seed{}.json", r.r, r.lambda, r.seed)
}

pub fn sweep(a: SweepArgs) -> Result<(), CliError> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(v) = a.r_levels {
        cfg.sweep.r_levels = v;
    }
    if let Some(v) = a.lambdas {
        cfg.sweep.lambdas = v;
    }
    if let Some(v) = a.seeds {
        cfg.sweep.seeds = v;
    }
    if let Some(v) = a.data_tau {
        cfg.data.tau = v;
    }
    if let Some(v) = a.n_total {
        cfg.data.n_total = v;
    }
    if let Some(v) = a.out_dir {
        cfg.output.dir = v;
    }
    apply(&mut cfg.train, &a.train);
    let sc = cfg.sweep_config();
    sc.validate().map_err(usage)?;
    validate_metrics(&sc.train.metrics)?;
    let workers = match a.workers {
        Some(0) => return Err(usage("workers must be positive")),
        Some(w) => w,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };

    let dir = cfg.output.dir.clone();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write_file(&dir.join("config.toml"), &cfg.to_toml()?)?;
    let groups = sc.r_levels.len() * sc.seeds.len();
    let done = AtomicUsize::new(0);
    let records = trainer::sweep(&sc, workers, &|g: &[SweepRecord]| {
        let k = done.fetch_add(1, Ordering::Relaxed) + 1;
        if let Some(first) = g.first() {
            let failed = g.iter().filter(|r| r.status() != "ok").count();
            eprintln!(
                "[{k}/{groups}] R={} seed={} finished ({failed} not ok)",
                first.r, first.seed
            );
        }
    })
    .map_err(|e| match e {
        Error::InvalidArgument(_) => usage(e),
        e => e.into(),
    })?;

    if !a.no_run_json {
        let runs = dir.join("runs");
        fs::create_dir_all(&runs).with_context(|| format!("creating {}", runs.display()))?;
        for r in &records {
            write_file(&runs.join(run_file_name(r)), &to_json(r)?)?;
        }
    }
    let rows: Vec<ResultRow> = records.iter().map(ResultRow::from_record).collect();
    let results_path = dir.join("results.csv");
    let summary_path = dir.join("summary.csv");
    let mut buf = Vec::new();
    write_results(&mut buf, &rows)?;
    fs::write(&results_path, buf).with_context(|| format!("writing {}", results_path.display()))?;
    let mut buf = Vec::new();
    write_summary(&mut buf, &summarize_rows(&rows))?;
    fs::write(&summary_path, buf).with_context(|| format!("writing {}", summary_path.display()))?;

    let not_ok = rows.iter().filter(|r| !r.is_ok()).count();
    print(&to_json(&json!({
        "runs": rows.len(),
        "not_ok": not_ok,
        "results": results_path,
        "summary": summary_path,
    }))?)
}

pub fn metrics(a: MetricsArgs) -> Result<(), CliError> {
    let mut mc = MetricConfig::default();
    if let Some(k) = a.k {
        mc.k = k;
    }
    if let Some(v) = a.variance_keep {
        mc.variance_keep = v;
    }
    validate_metrics(&mc)?;
    let read = |p: &PathBuf| read_matrix_csv(p).with_context(|| format!("reading {}", p.display()));
    let (fa, fb) = (read(&a.a)?, read(&a.b)?);
    if fa.rows() != fb.rows() {
        return Err(anyhow::anyhow!(
            "row counts differ: {} has {} rows, {} has {}",
            a.a.display(),
            fa.rows(),
            a.b.display(),
            fb.rows()
        )
        .into());
    }
    let report = alignment_report(ReprPair::new(fa, fb)?, &mc)?;
    let text = to_json(&report)?;
    if let Some(out) = &a.out {
        write_file(out, &text)?;
    }
    print(&text)
}

pub fn pid(a: PidArgs) -> Result<(), CliError> {
    if !(a.tol > 0.0 && a.tol.is_finite()) {
        return Err(usage(format!("tol must be finite and > 0, got {}", a.tol)));
    }
    let p = JointPmf::load_json(&a.pmf).with_context(|| format!("loading pmf {}", a.pmf.display()))?;
    let result = match broja_decompose_with(&p, a.tol, a.max_iter) {
        Ok(r) => r,
        Err(Error::PidNoConvergence(best)) => {
            eprintln!("best iterate after {} iterations:", best.iterations);
            eprintln!("{}", to_json(&best)?);
            return Err(Error::PidNoConvergence(best).into());
        }
        Err(e) => return Err(e.into()),
    };
    let text = to_json(&result)?;
    if let Some(out) = &a.out {
        write_file(out, &text)?;
    }
    print(&text)
}

pub fn report(a: ReportArgs) -> Result<(), CliError> {
    if !(a.tolerance >= 0.0 && a.tolerance.is_finite()) {
        return Err(usage(format!("tolerance must be finite and >= 0, got {}", a.tolerance)));
    }
    let file = fs::File::open(&a.results).with_context(|| format!("opening {}", a.results.display()))?;
    let rows = read_results(file).with_context(|| format!("reading {}", a.results.display()))?;
    if rows.is_empty() {
        return Err(anyhow::anyhow!("{} has no result rows", a.results.display()).into());
    }
    let trends = analyze(&summarize_rows(&rows), a.tolerance);
    let mut text = String::new();
    for t in &trends {
        text.push_str(&format!(
            "R={}  {}  peak lambda {}  spearman(lambda, cka/svcca/mknn) {:.3} / {:.3} / {:.3}\n",
            t.r,
            t.trend,
            t.peak_lambda.map_or("-".into(), |l| l.to_string()),
            t.spearman_cka,
            t.spearman_svcca,
            t.spearman_mknn,
        ));
        text.push_str("  lambda   acc_mean  acc_A     acc_B     cka       svcca     mknn\n");
        for i in 0..t.lambdas.len() {
            text.push_str(&format!(
                "  {:<7}  {:.5}   {:.5}   {:.5}   {:.5}   {:.5}   {:.5}\n",
                t.lambdas[i], t.acc_mean[i], t.acc_a[i], t.acc_b[i], t.cka[i], t.svcca[i], t.mknn[i]
            ));
        }
    }
    if let Some(out) = &a.out {
        write_file(out, &to_json(&trends)?)?;
    }
    print(text.trim_end())
}
