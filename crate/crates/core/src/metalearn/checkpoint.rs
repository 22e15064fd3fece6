//! `HMLC1` checkpoints: magic, little-endian `u32` header length, JSON header,
//! then `theta` as little-endian `f32`.

use std::fs;
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::adapt::Mode;
use super::embedder::{EmbedderKind, EmbedderParams};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 5] = b"HMLC1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub embedder: EmbedderKind,
    pub dropout: f64,
    pub mode: Mode,
    pub step: u64,
    pub n_params: usize,
}

pub fn encode_checkpoint(params: &EmbedderParams, mode: Mode, step: u64) -> Result<Vec<u8>> {
    let header = CheckpointHeader {
        embedder: params.kind,
        dropout: params.dropout,
        mode,
        step,
        n_params: params.n_params(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(MAGIC.len() + 4 + json.len() + 4 * params.n_params());
    out.extend_from_slice(MAGIC);
    out.write_u32::<LittleEndian>(json.len() as u32).unwrap();
    out.extend_from_slice(&json);
    for v in &params.theta {
        out.write_f32::<LittleEndian>(*v as f32).unwrap();
    }
    Ok(out)
}

pub fn decode_checkpoint(mut bytes: &[u8], origin: &Path) -> Result<(EmbedderParams, CheckpointHeader)> {
    if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::format(origin, "bad magic, expected HMLC1"));
    }
    bytes = &bytes[MAGIC.len()..];
    let n = bytes
        .read_u32::<LittleEndian>()
        .map_err(|_| Error::format(origin, "truncated header"))? as usize;
    if bytes.len() < n {
        return Err(Error::format(origin, "truncated header"));
    }
    let header: CheckpointHeader =
        serde_json::from_slice(&bytes[..n]).map_err(|e| Error::format(origin, format!("header: {e}")))?;
    let payload = &bytes[n..];
    if payload.len() != 4 * header.n_params {
        return Err(Error::format(
            origin,
            format!("payload is {} bytes, expected {}", payload.len(), 4 * header.n_params),
        ));
    }
    let mut params = EmbedderParams::zeros(header.embedder, header.dropout)?;
    if params.n_params() != header.n_params {
        return Err(Error::format(origin, "parameter count does not match embedder shape"));
    }
    let mut raw = vec![0f32; header.n_params];
    let mut p = payload;
    p.read_f32_into::<LittleEndian>(&mut raw)
        .map_err(|e| Error::io(origin, e))?;
    params.theta = raw.into_iter().map(f64::from).collect();
    Ok((params, header))
}

pub fn write_checkpoint(path: &Path, params: &EmbedderParams, mode: Mode, step: u64) -> Result<()> {
    let bytes = encode_checkpoint(params, mode, step)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<(EmbedderParams, CheckpointHeader)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}
