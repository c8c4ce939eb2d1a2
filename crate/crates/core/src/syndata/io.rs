//! Dataset container.
//!
//! ```text
//! offset  size        content
//! 0       8           magic "ALDSET01"
//! 8       8           header length H, u64 little-endian
//! 16      H           UTF-8 JSON header (see `Header`)
//! 16+H    n·12        x1, row-major, one byte per entry (0 or 1)
//! ..      n·12        x2, same layout
//! ..      n           y, one byte per label
//! ..      32          SHA-256 of every preceding byte
//! ```
//!
//! The JSON header carries `format`, `version`, `spec`, `allocation`,
//! `label_weights` (`{"rows","cols","data"}`, row-major), `splits`
//! (`train`/`val`/`test` index lists), `n` and `dim`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{FeatureAllocation, GenSpec, Splits, SyntheticDataset, INPUT_DIM};
use crate::error::{Error, Result};
use crate::numcore::Matrix;

pub const DATASET_MAGIC: &[u8; 8] = b"ALDSET01";
const FORMAT_NAME: &str = "alignlab-dataset";
const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    spec: GenSpec,
    allocation: FeatureAllocation,
    label_weights: Matrix,
    splits: Splits,
    n: usize,
    dim: usize,
}

pub fn write_dataset(ds: &SyntheticDataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode(ds)?)?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<SyntheticDataset> {
    decode(&fs::read(path)?)
}

pub(crate) fn encode(ds: &SyntheticDataset) -> Result<Vec<u8>> {
    let header = Header {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        spec: ds.spec.clone(),
        allocation: ds.allocation.clone(),
        label_weights: ds.label_weights.clone(),
        splits: ds.splits.clone(),
        n: ds.len(),
        dim: INPUT_DIM,
    };
    let json = serde_json::to_vec(&header)?;
    let n = ds.len();
    let mut out = Vec::with_capacity(16 + json.len() + n * (2 * INPUT_DIM + 1) + DIGEST_LEN);
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for m in [&ds.x1, &ds.x2] {
        out.extend(m.data().iter().map(|&v| (v != 0.0) as u8));
    }
    out.extend(ds.y.iter().map(|&c| c as u8));
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

fn format_err(offset: usize, field: &str, msg: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        field: field.into(),
        msg: msg.into(),
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize, field: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(format_err(
                self.pos,
                field,
                format!("truncated: need {len} bytes, {} left", self.buf.len() - self.pos),
            )),
        }
    }
}

pub(crate) fn decode(buf: &[u8]) -> Result<SyntheticDataset> {
    let mut cur = Cursor { buf, pos: 0 };
    if cur.take(8, "magic")? != DATASET_MAGIC {
        return Err(format_err(0, "magic", "not an alignlab dataset"));
    }
    let len_bytes = cur.take(8, "header_len")?;
    let header_len = u64::from_le_bytes(len_bytes.try_into().expect("8 bytes"));
    let header_len = usize::try_from(header_len).map_err(|_| format_err(8, "header_len", "header length overflows"))?;
    let header_off = cur.pos;
    let header: Header = serde_json::from_slice(cur.take(header_len, "header")?)
        .map_err(|e| format_err(header_off + e.column().saturating_sub(1), "header", e.to_string()))?;
    if header.format != FORMAT_NAME {
        return Err(format_err(
            header_off,
            "format",
            format!("unknown format {:?}", header.format),
        ));
    }
    if header.version != FORMAT_VERSION {
        return Err(format_err(
            header_off,
            "version",
            format!("unsupported version {}", header.version),
        ));
    }
    if header.dim != INPUT_DIM {
        return Err(format_err(
            header_off,
            "dim",
            format!("expected {INPUT_DIM}, got {}", header.dim),
        ));
    }
    header
        .spec
        .validate()
        .map_err(|e| format_err(header_off, "spec", e.to_string()))?;
    if header.n != header.spec.n_total {
        return Err(format_err(header_off, "n", "row count disagrees with spec.n_total"));
    }

    let n = header.n;
    let block = n
        .checked_mul(INPUT_DIM)
        .ok_or_else(|| format_err(header_off, "n", "row count overflows"))?;
    let mut read_block = |field: &str| -> Result<Matrix> {
        let start = cur.pos;
        let bytes = cur.take(block, field)?;
        if let Some(k) = bytes.iter().position(|&b| b > 1) {
            return Err(format_err(start + k, field, format!("byte {} is not 0 or 1", bytes[k])));
        }
        Ok(Matrix::from_raw(
            n,
            INPUT_DIM,
            bytes.iter().map(|&b| b as f64).collect(),
        ))
    };
    let x1 = read_block("x1")?;
    let x2 = read_block("x2")?;
    let y_start = cur.pos;
    let y: Vec<usize> = cur.take(n, "y")?.iter().map(|&b| b as usize).collect();
    let body_end = cur.pos;
    let digest = cur.take(DIGEST_LEN, "checksum")?;
    if cur.pos != buf.len() {
        return Err(format_err(cur.pos, "trailer", "unexpected bytes after checksum"));
    }
    if Sha256::digest(&buf[..body_end]).as_slice() != digest {
        return Err(format_err(body_end, "checksum", "SHA-256 mismatch"));
    }

    let ds = SyntheticDataset {
        spec: header.spec,
        allocation: header.allocation,
        label_weights: header.label_weights,
        x1,
        x2,
        y,
        splits: header.splits,
    };
    ds.validate()
        .map_err(|e| format_err(y_start, "dataset", e.to_string()))?;
    Ok(ds)
}
