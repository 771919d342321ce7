//! Binary matrix files: `NTFA`, version `u16`, rows `u32`, cols `u32`, then
//! row-major `f32` values, all little-endian.

use std::fs;
use std::path::Path;

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"NTFA";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 14;

pub fn encode_matrix(m: &Tensor) -> Result<Vec<u8>> {
    if m.shape().len() != 2 {
        return Err(Error::dim("encode_matrix", format!("expected a matrix, got {:?}", m.shape())));
    }
    let (rows, cols) = (m.rows(), m.cols());
    let too_big = |n: usize| u32::try_from(n).is_err();
    if too_big(rows) || too_big(cols) {
        return Err(Error::contract(format!("matrix {rows}×{cols} exceeds the format's limits")));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * m.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    for &x in m.data() {
        out.extend_from_slice(&(x as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_matrix(bytes: &[u8], path: &Path) -> Result<Tensor> {
    let fail = |offset: usize, message: String| Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        message,
    };
    if bytes.len() < HEADER_LEN {
        return Err(fail(bytes.len(), format!("truncated header: {} of {HEADER_LEN} bytes", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(fail(0, format!("bad magic {:?}", &bytes[..4])));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(fail(4, format!("unsupported version {version}")));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
    let (rows, cols) = (u32_at(6), u32_at(10));
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| fail(6, format!("{rows}×{cols} overflows")))?;
    if bytes.len() < expected {
        let whole = HEADER_LEN + (bytes.len() - HEADER_LEN) / 4 * 4;
        return Err(fail(whole, format!("truncated payload: {} of {expected} bytes", bytes.len())));
    }
    if bytes.len() > expected {
        return Err(fail(expected, format!("{} trailing bytes", bytes.len() - expected)));
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    Tensor::matrix(rows, cols, data)
}

pub fn write_matrix(path: &Path, m: &Tensor) -> Result<()> {
    let bytes = encode_matrix(m)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix(&bytes, path)
}
