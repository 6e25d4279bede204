//! `.mfem` eigenmodel files.
//!
//! Layout (little endian): magic `MFEM`, `u32` format (1), `u64` model
//! version, `u32` d, `u32` k, then `d` mean values, `d * k` basis values
//! (component-major) and `k` eigenvalues, all `f64`.

use std::fs;
use std::io::Write;
use std::path::Path;

use mfr_core::{EigenModel, RecognitionError};
use thiserror::Error;

const MAGIC: &[u8; 4] = b"MFEM";
const FORMAT: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("not an MFEM file")]
    BadMagic,
    #[error("unsupported MFEM format {0}")]
    UnsupportedFormat(u32),
    #[error("model file is truncated or has trailing bytes")]
    BadLength,
    #[error("inconsistent model: {0}")]
    Invalid(#[from] RecognitionError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn encode_model(model: &EigenModel) -> Vec<u8> {
    let d = model.dim();
    let k = model.k();
    let mut out = Vec::with_capacity(24 + 8 * (d + d * k + k));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT.to_le_bytes());
    out.extend_from_slice(&model.version().to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.extend_from_slice(&(k as u32).to_le_bytes());
    for v in model
        .mean()
        .iter()
        .chain(model.basis())
        .chain(model.eigenvalues())
    {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<EigenModel, ModelFileError> {
    if bytes.len() < 24 {
        return Err(if bytes.starts_with(MAGIC) || bytes.len() < 4 {
            ModelFileError::BadLength
        } else {
            ModelFileError::BadMagic
        });
    }
    if &bytes[0..4] != MAGIC {
        return Err(ModelFileError::BadMagic);
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let format = u32_at(4);
    if format != FORMAT {
        return Err(ModelFileError::UnsupportedFormat(format));
    }
    let version = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let d = u32_at(16) as usize;
    let k = u32_at(20) as usize;
    let count = d
        .checked_mul(k)
        .and_then(|dk| dk.checked_add(d + k))
        .ok_or(ModelFileError::BadLength)?;
    if bytes.len() - 24 != count.checked_mul(8).ok_or(ModelFileError::BadLength)? {
        return Err(ModelFileError::BadLength);
    }
    let mut values = bytes[24..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mean: Vec<f64> = values.by_ref().take(d).collect();
    let basis: Vec<f64> = values.by_ref().take(d * k).collect();
    let eigenvalues: Vec<f64> = values.collect();
    Ok(EigenModel::from_parts(
        d,
        mean,
        basis,
        eigenvalues,
        version,
    )?)
}

pub fn load_model(path: &Path) -> Result<EigenModel, ModelFileError> {
    decode_model(&fs::read(path)?)
}

/// Writes atomically via a sibling temp file.
pub fn save_model(model: &EigenModel, path: &Path) -> Result<(), ModelFileError> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(&encode_model(model))?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
