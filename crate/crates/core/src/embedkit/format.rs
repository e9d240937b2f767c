//! `PACE` embedding files.
//!
//! ```text
//! 0..4    magic "PACE"
//! 4..8    version, u32 LE (= 1)
//! 8..12   rows, u32 LE
//! 12..16  dim, u32 LE
//! 16      dtype, u8 (0 = float32)
//! 17..32  reserved, zero
//! 32..    rows*dim float32 LE, row-major
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use super::EmbeddingMatrix;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PACE";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;
const DTYPE_F32: u8 = 0;

fn format_err(offset: usize, reason: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        reason: reason.into(),
    }
}

fn u32_at(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("4-byte slice"))
}

/// Parses a complete `PACE` byte buffer.
pub fn read_embeddings(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    if bytes.len() < HEADER_LEN {
        return Err(format_err(bytes.len(), format!("header truncated ({} of {HEADER_LEN} bytes)", bytes.len())));
    }
    if &bytes[0..4] != MAGIC {
        return Err(format_err(0, format!("bad magic {:?}", String::from_utf8_lossy(&bytes[0..4]))));
    }
    let version = u32_at(bytes, 4);
    if version != VERSION {
        return Err(format_err(4, format!("unsupported version {version}")));
    }
    let rows = u32_at(bytes, 8) as usize;
    let dim = u32_at(bytes, 12) as usize;
    if dim == 0 {
        return Err(format_err(12, "dim must be at least 1"));
    }
    if bytes[16] != DTYPE_F32 {
        return Err(format_err(16, format!("unsupported dtype code {}", bytes[16])));
    }
    if let Some(i) = bytes[17..HEADER_LEN].iter().position(|&b| b != 0) {
        return Err(format_err(17 + i, "reserved header byte is not zero"));
    }
    let count = rows
        .checked_mul(dim)
        .ok_or_else(|| format_err(8, "rows*dim overflows"))?;
    let expected = count
        .checked_mul(4)
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| format_err(8, "payload size overflows"))?;
    if bytes.len() < expected {
        return Err(format_err(
            bytes.len(),
            format!("payload truncated: expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    if bytes.len() > expected {
        return Err(format_err(expected, format!("{} trailing bytes after payload", bytes.len() - expected)));
    }
    let mut data = Vec::with_capacity(count);
    for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
        if !v.is_finite() {
            return Err(format_err(HEADER_LEN + 4 * i, format!("non-finite value {v}")));
        }
        data.push(f64::from(v));
    }
    EmbeddingMatrix::new(rows, dim, data)
}

/// Serialises `m` into `out`. Values are rounded to the nearest `f32`; a value
/// that overflows `f32` is rejected before anything is written.
pub fn write_embeddings<W: Write>(m: &EmbeddingMatrix, out: &mut W) -> std::io::Result<()> {
    let buf = encode(m).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))?;
    out.write_all(&buf)
}

fn encode(m: &EmbeddingMatrix) -> Result<Vec<u8>> {
    let rows = u32::try_from(m.rows()).map_err(|_| Error::invalid("row count exceeds u32"))?;
    let dim = u32::try_from(m.dim()).map_err(|_| Error::invalid("dim exceeds u32"))?;
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * m.as_slice().len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&rows.to_le_bytes());
    buf.extend_from_slice(&dim.to_le_bytes());
    buf.push(DTYPE_F32);
    buf.resize(HEADER_LEN, 0);
    for (i, &v) in m.as_slice().iter().enumerate() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(Error::NonFinite(format!("value {v} at index {i} does not fit in float32")));
        }
        buf.extend_from_slice(&f.to_le_bytes());
    }
    Ok(buf)
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(&bytes)
}

pub fn save_embeddings(m: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let buf = encode(m)?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}
