//! Adapter checkpoints.
//!
//! ```text
//! 0..4        magic "PACA"
//! 4..8        header length H, u32 LE
//! 8..8+H      UTF-8 JSON header
//! 8+H..       float32 LE payloads, row-major: image A, image B, text A, text B
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::lora::{Adapters, LoraAdapter};
use super::train::TrainConfig;
use crate::embedkit::Matrix;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"PACA";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub rank: usize,
    pub alpha: f64,
    /// `[d_in, d_out]` of the image head.
    pub image_dims: [usize; 2],
    /// `[d_in, d_out]` of the text head.
    pub text_dims: [usize; 2],
    pub seed: u64,
    pub config_hash: String,
}

/// SHA-256 over the canonical JSON encoding of the training configuration.
pub fn config_hash(cfg: &TrainConfig) -> String {
    let bytes = serde_json::to_vec(cfg).expect("config serialises");
    hex::encode(Sha256::digest(&bytes))
}

fn format_err(offset: usize, reason: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        reason: reason.into(),
    }
}

/// Serialises adapters into checkpoint bytes.
pub fn encode_checkpoint(adapters: &Adapters, seed: u64, config_hash: &str) -> Result<Vec<u8>> {
    if adapters.image.rank() != adapters.text.rank() || adapters.image.alpha() != adapters.text.alpha() {
        return Err(Error::invalid("image and text adapters must share rank and alpha"));
    }
    let header = CheckpointHeader {
        rank: adapters.image.rank(),
        alpha: adapters.image.alpha(),
        image_dims: [adapters.image.d_in(), adapters.image.d_out()],
        text_dims: [adapters.text.d_in(), adapters.text.d_out()],
        seed,
        config_hash: config_hash.to_owned(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for v in adapters.to_flat() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(Error::NonFinite("adapter value does not fit in float32".into()));
        }
        buf.extend_from_slice(&f.to_le_bytes());
    }
    Ok(buf)
}

pub fn write_checkpoint(path: impl AsRef<Path>, adapters: &Adapters, seed: u64, config_hash: &str) -> Result<()> {
    let path = path.as_ref();
    let buf = encode_checkpoint(adapters, seed, config_hash)?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<(CheckpointHeader, Adapters)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 8 || &bytes[0..4] != MAGIC {
        return Err(format_err(0, "bad checkpoint magic"));
    }
    let hlen = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let body = 8usize
        .checked_add(hlen)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| format_err(4, "header length exceeds file"))?;
    let header: CheckpointHeader =
        serde_json::from_slice(&bytes[8..body]).map_err(|e| format_err(8, format!("header json: {e}")))?;
    let r = header.rank;
    let shapes = [
        (header.image_dims[0], r),
        (r, header.image_dims[1]),
        (header.text_dims[0], r),
        (r, header.text_dims[1]),
    ];
    let expected: usize = shapes.iter().map(|(a, b)| a * b).sum();
    let payload = &bytes[body..];
    if payload.len() != expected * 4 {
        return Err(format_err(
            body,
            format!("expected {} payload bytes, found {}", expected * 4, payload.len()),
        ));
    }
    let values: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
        .collect();
    let mut rest = values.as_slice();
    let mut mats = Vec::with_capacity(4);
    for (rows, cols) in shapes {
        let (head, tail) = rest.split_at(rows * cols);
        mats.push(Matrix::from_vec(rows, cols, head.to_vec())?);
        rest = tail;
    }
    let mut it = mats.into_iter();
    let mut next = || it.next().expect("four matrices");
    let image = LoraAdapter::from_parts(next(), next(), header.alpha)?;
    let text = LoraAdapter::from_parts(next(), next(), header.alpha)?;
    Ok((header, Adapters { image, text }))
}
