//! The `TNSR1` dense tensor file format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! bytes 0..8    magic "TNSR1\0\0\0"
//! bytes 8..16   u64 N (mode count; 0 for a scalar)
//! then          N x u64 extents
//! then          prod(extents) x f64 values, first index fastest
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

pub const MAGIC: [u8; 8] = *b"TNSR1\0\0\0";

pub fn write_tensor(t: &DenseTensor, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + 8 * t.ndim() + 8 * t.len());
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&(t.ndim() as u64).to_le_bytes());
    for &d in t.dims() {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in t.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<DenseTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let name = path.display();
    let take8 = |off: usize| -> Option<[u8; 8]> { bytes.get(off..off + 8)?.try_into().ok() };
    let magic = take8(0).ok_or_else(|| Error::Parse(format!("{name}: too short for magic")))?;
    if magic != MAGIC {
        return Err(Error::Parse(format!("{name}: bad magic {magic:?}")));
    }
    let n = u64::from_le_bytes(
        take8(8).ok_or_else(|| Error::Parse(format!("{name}: missing mode count")))?,
    );
    let n = usize::try_from(n).map_err(|_| Error::Parse(format!("{name}: absurd mode count")))?;
    let mut dims = Vec::with_capacity(n);
    let mut count: usize = 1;
    for k in 0..n {
        let d = u64::from_le_bytes(take8(16 + 8 * k).ok_or_else(|| {
            Error::Parse(format!("{name}: header claims {n} dims, only {k} present"))
        })?);
        let d = usize::try_from(d)
            .ok()
            .filter(|&d| d > 0)
            .ok_or_else(|| Error::CorruptFile(format!("{name}: bad extent {d}")))?;
        count = count
            .checked_mul(d)
            .ok_or_else(|| Error::CorruptFile(format!("{name}: extent product overflows")))?;
        dims.push(d);
    }
    let payload = &bytes[16 + 8 * n..];
    if payload.len() != 8 * count {
        return Err(Error::CorruptFile(format!(
            "{name}: dims {dims:?} need {count} values, payload holds {}",
            payload.len() / 8
        )));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::CorruptFile(format!(
            "{name}: non-finite value {bad}"
        )));
    }
    if dims.is_empty() {
        return Ok(DenseTensor::scalar(values[0]));
    }
    DenseTensor::new(dims, values)
}
