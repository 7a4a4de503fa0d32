//! `TPEW` files: magic `TPEW`, little-endian `u32` n and N, then `n * N`
//! little-endian `f64` values in row-major order.

use std::fs;
use std::path::Path;

use super::EmbeddingMatrix;
use crate::error::{Error, Result};

const MATRIX_MAGIC: &[u8; 4] = b"TPEW";

pub fn save_matrix(w: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(12 + 8 * w.as_slice().len());
    bytes.extend_from_slice(MATRIX_MAGIC);
    for d in [w.rows(), w.cols()] {
        let d = u32::try_from(d).map_err(|_| Error::format(path, "dimension exceeds u32"))?;
        bytes.extend_from_slice(&d.to_le_bytes());
    }
    for v in w.as_slice() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 12 || &bytes[..4] != MATRIX_MAGIC {
        return Err(Error::format(path, "not a TPEW matrix file"));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if body.len() != rows * cols * 8 {
        return Err(Error::format(
            path,
            format!(
                "expected {} bytes for {rows}x{cols}, found {}",
                rows * cols * 8,
                body.len()
            ),
        ));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    EmbeddingMatrix::new(rows, cols, data).map_err(|e| Error::format(path, e.to_string()))
}
