//! Model checkpoint container.
//!
//! ```text
//! offset  size      content
//! 0       8         magic "ALCKPT01"
//! 8       8         header length H, u64 little-endian
//! 16      H         UTF-8 JSON header: format, version, config, init_seed,
//!                   params = [{name, rows, cols}, ...] in canonical order
//! 16+H    Σ 8·r·c   parameter blocks, row-major f64 little-endian
//! ..      32        SHA-256 of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ModelConfig, ModelState};
use crate::error::{Error, Result};
use crate::numcore::Matrix;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ALCKPT01";
const FORMAT_NAME: &str = "alignlab-checkpoint";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    config: ModelConfig,
    init_seed: u64,
    params: Vec<ParamEntry>,
}

fn format_err(offset: usize, field: &str, msg: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        field: field.into(),
        msg: msg.into(),
    }
}

pub(crate) fn encode(state: &ModelState) -> Result<Vec<u8>> {
    let header = Header {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        config: state.config.clone(),
        init_seed: state.init_seed,
        params: state
            .param_names()
            .into_iter()
            .zip(state.params())
            .map(|(name, p)| ParamEntry {
                name,
                rows: p.rows(),
                cols: p.cols(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for p in state.params() {
        for v in p.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

pub(crate) fn decode(buf: &[u8]) -> Result<ModelState> {
    if buf.len() < 16 {
        return Err(format_err(buf.len(), "magic", "truncated before header"));
    }
    if &buf[..8] != CHECKPOINT_MAGIC {
        return Err(format_err(0, "magic", "not an alignlab checkpoint"));
    }
    let hlen = u64::from_le_bytes(buf[8..16].try_into().expect("8 bytes"));
    let hend = usize::try_from(hlen)
        .ok()
        .and_then(|h| h.checked_add(16))
        .filter(|&e| e <= buf.len())
        .ok_or_else(|| format_err(8, "header_len", "header extends past end of file"))?;
    let header: Header = serde_json::from_slice(&buf[16..hend])
        .map_err(|e| format_err(16 + e.column().saturating_sub(1), "header", e.to_string()))?;
    if header.format != FORMAT_NAME || header.version != FORMAT_VERSION {
        return Err(format_err(16, "format", "unknown checkpoint format or version"));
    }
    let mut state = ModelState::zeros(&header.config).map_err(|e| format_err(16, "config", e.to_string()))?;
    state.init_seed = header.init_seed;
    let names = state.param_names();
    if names.len() != header.params.len() {
        return Err(format_err(16, "params", "parameter count does not match config"));
    }

    let mut pos = hend;
    for ((slot, entry), name) in state.params_mut().into_iter().zip(&header.params).zip(&names) {
        if &entry.name != name || (entry.rows, entry.cols) != slot.shape() {
            return Err(format_err(
                16,
                "params",
                format!("entry {} does not match expected {name} {:?}", entry.name, slot.shape()),
            ));
        }
        let len = 8 * entry.rows * entry.cols;
        if pos + len > buf.len() {
            return Err(format_err(pos, name, "truncated parameter block"));
        }
        let data: Vec<f64> = buf[pos..pos + len]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        *slot = Matrix::new(entry.rows, entry.cols, data).map_err(|e| format_err(pos, name, e.to_string()))?;
        pos += len;
    }
    if buf.len() != pos + 32 {
        return Err(format_err(pos, "checksum", "missing or trailing bytes around checksum"));
    }
    if Sha256::digest(&buf[..pos]).as_slice() != &buf[pos..] {
        return Err(format_err(pos, "checksum", "SHA-256 mismatch"));
    }
    Ok(state)
}

pub fn write_checkpoint(state: &ModelState, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode(state)?)?;
    Ok(())
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<ModelState> {
    decode(&fs::read(path)?)
}
