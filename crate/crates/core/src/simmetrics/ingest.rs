//! Representation matrices as CSV.
//!
//! One sample per line, comma-separated numeric columns. The first line is
//! treated as a header when none of its fields parses as a number; otherwise
//! it is data. Every data row must have the same number of fields and every
//! value must be finite. Errors report the 1-based line number.
//!
//! [`write_matrix_csv`] prints shortest round-trip decimals, so reading back
//! reproduces every value exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numcore::Matrix;

fn parse_err(row: usize, msg: impl Into<String>) -> Error {
    Error::Parse { row, msg: msg.into() }
}

pub fn parse_matrix_csv(text: &str) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut data = Vec::new();
    let mut cols: Option<usize> = None;
    let mut rows = 0usize;
    for (idx, rec) in reader.records().enumerate() {
        let line = idx + 1;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if idx == 0 && rec.iter().all(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        match cols {
            None => cols = Some(rec.len()),
            Some(c) if c != rec.len() => {
                return Err(parse_err(line, format!("expected {c} fields, found {}", rec.len())));
            }
            _ => {}
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line, format!("column {}: {field:?} is not a number", j + 1)))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("column {}: non-finite value {field}", j + 1)));
            }
            data.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| parse_err(1, "no data rows"))?;
    Matrix::new(rows, cols, data)
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<Matrix> {
    parse_matrix_csv(&fs::read_to_string(path)?)
}

pub fn write_matrix_csv(m: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for i in 0..m.rows() {
        let line: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()?;
    Ok(())
}
