//! `ROOTMTX1` binary matrix dumps.
//!
//! Layout (little-endian): 8-byte magic `ROOTMTX1`, `u32` rows, `u32` cols,
//! `u8` dtype tag (0 = f64, 1 = f32), then the row-major payload.

use super::{DenseMatrix, MatrixError};
use std::fs;
use std::io::Write;
use std::path::Path;

pub const DUMP_MAGIC: &[u8; 8] = b"ROOTMTX1";
const HEADER_LEN: usize = 8 + 4 + 4 + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DumpDtype {
    F64,
    F32,
}

impl DumpDtype {
    fn tag(self) -> u8 {
        match self {
            DumpDtype::F64 => 0,
            DumpDtype::F32 => 1,
        }
    }

    fn width(self) -> usize {
        match self {
            DumpDtype::F64 => 8,
            DumpDtype::F32 => 4,
        }
    }
}

pub fn encode_dump(m: &DenseMatrix, dtype: DumpDtype) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + m.len() * dtype.width());
    out.extend_from_slice(DUMP_MAGIC);
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    out.push(dtype.tag());
    for &v in m.as_slice() {
        match dtype {
            DumpDtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
            DumpDtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
        }
    }
    out
}

pub fn decode_dump(bytes: &[u8]) -> Result<DenseMatrix, MatrixError> {
    if bytes.len() < HEADER_LEN {
        return Err(MatrixError::MalformedDump(format!(
            "{} bytes is shorter than the header",
            bytes.len()
        )));
    }
    if &bytes[..8] != DUMP_MAGIC {
        return Err(MatrixError::MalformedDump("bad magic".into()));
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let dtype = match bytes[16] {
        0 => DumpDtype::F64,
        1 => DumpDtype::F32,
        tag => return Err(MatrixError::MalformedDump(format!("unknown dtype tag {tag}"))),
    };
    let payload = &bytes[HEADER_LEN..];
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(dtype.width()))
        .ok_or_else(|| MatrixError::MalformedDump("shape overflows".into()))?;
    if payload.len() != expected {
        return Err(MatrixError::MalformedDump(format!(
            "payload is {} bytes, expected {expected} for {rows}x{cols}",
            payload.len()
        )));
    }
    let data = match dtype {
        DumpDtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        DumpDtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
    };
    DenseMatrix::new(rows, cols, data)
}

pub fn write_dump(path: impl AsRef<Path>, m: &DenseMatrix, dtype: DumpDtype) -> Result<(), MatrixError> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&encode_dump(m, dtype))?;
    Ok(())
}

pub fn read_dump(path: impl AsRef<Path>) -> Result<DenseMatrix, MatrixError> {
    decode_dump(&fs::read(path)?)
}
