//! Results and summary CSV files.
//!
//! Both start with a `# schema_version=1` comment line, then a header row.
//! Floats are written with 17 significant digits; metric cells of runs that
//! produced no record are `NaN`. The loss columns hold the training losses of
//! the selected epoch (`task_loss` sums both encoders) and are `NaN` when the
//! untrained model was selected.

use std::io::{BufRead, BufReader, Read, Write};

use alignlab::trainer::SweepRecord;
use anyhow::{bail, Context};

pub const SCHEMA_VERSION: u32 = 1;

pub const RESULT_COLUMNS: [&str; 11] = [
    "R",
    "lambda",
    "seed",
    "acc_A",
    "acc_B",
    "cka",
    "svcca",
    "mknn",
    "task_loss",
    "align_loss",
    "status",
];

pub const SUMMARY_COLUMNS: [&str; 9] = [
    "R", "lambda", "runs", "acc_A", "acc_B", "acc_mean", "cka", "svcca", "mknn",
];

pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub r: usize,
    pub lambda: f64,
    pub seed: u64,
    pub acc_a: f64,
    pub acc_b: f64,
    pub cka: f64,
    pub svcca: f64,
    pub mknn: f64,
    pub task_loss: f64,
    pub align_loss: f64,
    pub status: String,
}

impl ResultRow {
    pub fn from_record(rec: &SweepRecord) -> Self {
        let nan = f64::NAN;
        let mut row = Self {
            r: rec.r,
            lambda: rec.lambda,
            seed: rec.seed,
            acc_a: nan,
            acc_b: nan,
            cka: nan,
            svcca: nan,
            mknn: nan,
            task_loss: nan,
            align_loss: nan,
            status: rec.status().to_string(),
        };
        if let Some(run) = &rec.record {
            row.acc_a = run.acc_a;
            row.acc_b = run.acc_b;
            row.cka = run.alignment.cka;
            row.svcca = run.alignment.svcca;
            row.mknn = run.alignment.mknn;
            if let Some(l) = run.selected_losses() {
                row.task_loss = l.task();
                row.align_loss = l.align;
            }
        }
        row
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    fn fields(&self) -> Vec<String> {
        let mut f = vec![self.r.to_string(), fmt_float(self.lambda), self.seed.to_string()];
        f.extend(
            [
                self.acc_a,
                self.acc_b,
                self.cka,
                self.svcca,
                self.mknn,
                self.task_loss,
                self.align_loss,
            ]
            .into_iter()
            .map(fmt_float),
        );
        f.push(self.status.clone());
        f
    }
}

/// Seed means of one `(R, λ)` cell over its `ok` rows.
#[derive(Clone, Debug, PartialEq)]
pub struct CellSummary {
    pub r: usize,
    pub lambda: f64,
    pub runs: usize,
    pub acc_a: f64,
    pub acc_b: f64,
    pub cka: f64,
    pub svcca: f64,
    pub mknn: f64,
}

impl CellSummary {
    pub fn acc_mean(&self) -> f64 {
        (self.acc_a + self.acc_b) / 2.0
    }
}

/// One summary per `(R, λ)` in first-appearance order; cells without an `ok`
/// row get `runs = 0` and NaN means.
pub fn summarize_rows(rows: &[ResultRow]) -> Vec<CellSummary> {
    let mut keys: Vec<(usize, f64)> = Vec::new();
    for row in rows {
        if !keys
            .iter()
            .any(|&(r, l)| r == row.r && l.to_bits() == row.lambda.to_bits())
        {
            keys.push((row.r, row.lambda));
        }
    }
    keys.into_iter()
        .map(|(r, lambda)| {
            let cell: Vec<&ResultRow> = rows
                .iter()
                .filter(|x| x.r == r && x.lambda.to_bits() == lambda.to_bits() && x.is_ok())
                .collect();
            let mean = |f: fn(&ResultRow) -> f64| {
                if cell.is_empty() {
                    f64::NAN
                } else {
                    cell.iter().map(|x| f(x)).sum::<f64>() / cell.len() as f64
                }
            };
            CellSummary {
                r,
                lambda,
                runs: cell.len(),
                acc_a: mean(|x| x.acc_a),
                acc_b: mean(|x| x.acc_b),
                cka: mean(|x| x.cka),
                svcca: mean(|x| x.svcca),
                mknn: mean(|x| x.mknn),
            }
        })
        .collect()
}

fn write_table<W: Write>(mut out: W, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> anyhow::Result<()> {
    writeln!(out, "# schema_version={SCHEMA_VERSION}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_results<W: Write>(out: W, rows: &[ResultRow]) -> anyhow::Result<()> {
    write_table(out, &RESULT_COLUMNS, rows.iter().map(ResultRow::fields))
}

pub fn write_summary<W: Write>(out: W, cells: &[CellSummary]) -> anyhow::Result<()> {
    write_table(
        out,
        &SUMMARY_COLUMNS,
        cells.iter().map(|c| {
            let mut f = vec![c.r.to_string(), fmt_float(c.lambda), c.runs.to_string()];
            f.extend(
                [c.acc_a, c.acc_b, c.acc_mean(), c.cka, c.svcca, c.mknn]
                    .into_iter()
                    .map(fmt_float),
            );
            f
        }),
    )
}

pub fn results_to_string(rows: &[ResultRow]) -> String {
    let mut buf = Vec::new();
    write_results(&mut buf, rows).expect("writing to memory");
    String::from_utf8(buf).expect("CSV output is UTF-8")
}

/// Parses a results file, checking the schema line and the header.
pub fn read_results<R: Read>(input: R) -> anyhow::Result<Vec<ResultRow>> {
    let mut input = BufReader::new(input);
    let mut first = String::new();
    input.read_line(&mut first)?;
    let first = first.trim_end();
    if first.is_empty() {
        bail!("results file is empty");
    }
    let version = first
        .strip_prefix("# schema_version=")
        .with_context(|| format!("line 1 should be `# schema_version={SCHEMA_VERSION}`, got `{first}`"))?;
    if version.trim() != SCHEMA_VERSION.to_string() {
        bail!("unsupported results schema version {version} (expected {SCHEMA_VERSION})");
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != RESULT_COLUMNS {
        bail!("unexpected header {header:?}, expected {RESULT_COLUMNS:?}");
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 3;
        let rec = rec.with_context(|| format!("line {line}"))?;
        let num = |k: usize| -> anyhow::Result<f64> {
            rec[k]
                .parse()
                .with_context(|| format!("line {line}, column {}: `{}`", RESULT_COLUMNS[k], &rec[k]))
        };
        let int = |k: usize| -> anyhow::Result<u64> {
            rec[k]
                .parse()
                .with_context(|| format!("line {line}, column {}: `{}`", RESULT_COLUMNS[k], &rec[k]))
        };
        rows.push(ResultRow {
            r: int(0)? as usize,
            lambda: num(1)?,
            seed: int(2)?,
            acc_a: num(3)?,
            acc_b: num(4)?,
            cka: num(5)?,
            svcca: num(6)?,
            mknn: num(7)?,
            task_loss: num(8)?,
            align_loss: num(9)?,
            status: rec[10].to_string(),
        });
    }
    Ok(rows)
}
