//! Weight file: a one-line JSON header, then every layer's weights (row-major)
//! followed by its biases as little-endian `f32`, then a little-endian CRC-32
//! of that payload.
//!
//! ```text
//! {"format_version":1,"layer_dims":[1152,256,64,1],"activation":"relu"}\n
//! <f32 LE> ... <f32 LE>
//! <u32 LE crc32(payload)>
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::{Activation, MlpParams};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    layer_dims: Vec<usize>,
    activation: Activation,
}

pub fn to_bytes(params: &MlpParams) -> Vec<u8> {
    let header = Header {
        format_version: FORMAT_VERSION,
        layer_dims: params.layer_dims().to_vec(),
        activation: params.activation(),
    };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    let start = out.len();
    for (w, b) in params.weights().iter().zip(params.biases()) {
        for v in w.iter().chain(b.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out[start..]);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<MlpParams> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::FormatVersionMismatch("missing header line".into()))?;
    let header: Header = serde_json::from_slice(&bytes[..newline])
        .map_err(|e| Error::FormatVersionMismatch(format!("header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::FormatVersionMismatch(format!(
            "version {} (supported: {FORMAT_VERSION})",
            header.format_version
        )));
    }
    let dims = &header.layer_dims;
    if dims.len() < 2 {
        return Err(Error::ShapeMismatch(format!("layer dims {dims:?}")));
    }
    let floats: usize = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    let body = &bytes[newline + 1..];
    let expected = floats * 4 + 4;
    if body.len() < expected {
        return Err(Error::FormatVersionMismatch(format!(
            "truncated: {} payload bytes, expected {expected}",
            body.len()
        )));
    }
    if body.len() > expected {
        return Err(Error::ShapeMismatch(format!(
            "{} trailing bytes after payload",
            body.len() - expected
        )));
    }
    let (payload, crc) = body.split_at(floats * 4);
    if crc32fast::hash(payload) != u32::from_le_bytes(crc.try_into().expect("4 bytes")) {
        return Err(Error::ChecksumMismatch);
    }
    let mut values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for w in dims.windows(2) {
        weights.push(values.by_ref().take(w[0] * w[1]).collect());
        biases.push(values.by_ref().take(w[1]).collect());
    }
    MlpParams::from_parts(dims, weights, biases)
}

pub fn save_weights(params: &MlpParams, path: &Path) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(&to_bytes(params))?;
    file.sync_all()?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<MlpParams> {
    from_bytes(&fs::read(path)?)
}
