//! The `DTF1` binary tensor file format.
//!
//! Layout: magic bytes `DTF1`, a little-endian `u32` order, `order`
//! little-endian `u64` dimensions, then the row-major payload as
//! little-endian `f64` values. Readers reject wrong magic, truncated or
//! oversized payloads, and zero dimensions. Writing then reading a tensor
//! reproduces it bit-exactly, including negative zero and subnormals.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

const MAGIC: &[u8; 4] = b"DTF1";

/// Serializes a tensor into the `DTF1` byte layout.
pub fn to_bytes(x: &DenseTensor) -> Vec<u8> {
    let mut buf = Vec::with_capacity(4 + 4 + 8 * x.order() + 8 * x.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(x.order() as u32).to_le_bytes());
    for &d in x.shape() {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in x.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

/// Parses a `DTF1` byte buffer into a tensor.
pub fn from_bytes(bytes: &[u8]) -> Result<DenseTensor> {
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        let end = pos
            .checked_add(n)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::Format("truncated DTF1 payload".into()))?;
        let s = &bytes[*pos..end];
        *pos = end;
        Ok(s)
    };

    let magic = take(&mut pos, 4)?;
    if magic != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {magic:?}, expected {MAGIC:?}"
        )));
    }
    let order = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    if order == 0 {
        return Err(Error::Format("tensor order must be >= 1".into()));
    }
    let mut shape = Vec::with_capacity(order);
    let mut count: u128 = 1;
    for _ in 0..order {
        let d = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
        if d == 0 {
            return Err(Error::Format("zero dimension in DTF1 header".into()));
        }
        count *= d as u128;
        if count > (1 << 40) {
            return Err(Error::Format(format!(
                "element count {count} exceeds supported size"
            )));
        }
        shape.push(d as usize);
    }
    let n = count as usize;
    let payload = take(&mut pos, 8 * n)?;
    if pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after DTF1 payload",
            bytes.len() - pos
        )));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    DenseTensor::new(shape, data)
}

pub fn write_file(path: impl AsRef<Path>, x: &DenseTensor) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&to_bytes(x))?;
    w.flush()?;
    Ok(())
}

pub fn read_file(path: impl AsRef<Path>) -> Result<DenseTensor> {
    let mut r = BufReader::new(File::open(path)?);
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    from_bytes(&bytes)
}
