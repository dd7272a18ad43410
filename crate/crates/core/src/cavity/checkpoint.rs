//! Flat binary pool checkpoints.
//!
//! Layout: 32-byte header `magic[8] | version u32 | complex u32 | N u64 |
//! eta f64`, then N little-endian f64 (or N (re, im) pairs).

use super::population::{CavityValue, Population};
use num_complex::Complex64;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 8] = b"MOBEPOOL";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a pool checkpoint")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("checkpoint holds {found} samples, expected {expected}")]
    Kind { found: &'static str, expected: &'static str },
    #[error("truncated checkpoint")]
    Truncated,
}

fn kind(complex: bool) -> &'static str {
    if complex {
        "complex"
    } else {
        "real"
    }
}

pub fn write_checkpoint<T: CavityValue>(pop: &Population<T>, path: &Path) -> Result<(), CheckpointError> {
    let mut buf = Vec::with_capacity(32 + pop.samples.len() * if T::COMPLEX { 16 } else { 8 });
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(T::COMPLEX as u32).to_le_bytes());
    buf.extend_from_slice(&(pop.samples.len() as u64).to_le_bytes());
    buf.extend_from_slice(&pop.eta.to_le_bytes());
    for s in &pop.samples {
        buf.extend_from_slice(&s.re().to_le_bytes());
        if T::COMPLEX {
            buf.extend_from_slice(&s.im().to_le_bytes());
        }
    }
    let tmp = path.with_extension("tmp");
    std::fs::File::create(&tmp)?.write_all(&buf)?;
    std::fs::rename(tmp, path)?;
    Ok(())
}

/// Reads a checkpoint into a real (`f64`) or complex pool. Energy and
/// history are not stored and come back as NaN / empty.
pub fn read_checkpoint<T: CavityValue + FromParts>(path: &Path) -> Result<Population<T>, CheckpointError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 32 {
        return Err(CheckpointError::Truncated);
    }
    if &bytes[..8] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(8);
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let complex = u32_at(12) != 0;
    if complex != T::COMPLEX {
        return Err(CheckpointError::Kind { found: kind(complex), expected: kind(T::COMPLEX) });
    }
    let n = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let eta = f64::from_le_bytes(bytes[24..32].try_into().unwrap());
    let width = if complex { 16 } else { 8 };
    if bytes.len() != 32 + n * width {
        return Err(CheckpointError::Truncated);
    }
    let f = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let samples = (0..n)
        .map(|i| {
            let o = 32 + i * width;
            T::from_parts(f(o), if complex { f(o + 8) } else { 0.0 })
        })
        .collect();
    Ok(Population { samples, energy: f64::NAN, eta, generation: 0, convergence_history: Vec::new() })
}

pub trait FromParts {
    fn from_parts(re: f64, im: f64) -> Self;
}

impl FromParts for f64 {
    fn from_parts(re: f64, _im: f64) -> Self {
        re
    }
}

impl FromParts for Complex64 {
    fn from_parts(re: f64, im: f64) -> Self {
        Complex64::new(re, im)
    }
}
