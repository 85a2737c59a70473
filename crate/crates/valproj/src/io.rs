//! On-disk formats: PMVEC1 vectors, vector sets, and P5 graymaps.
//!
//! PMVEC1 is the crate's lossless vector format: the 6 ASCII magic bytes
//! `PMVEC1`, an unsigned 64-bit little-endian element count, then that many
//! IEEE-754 little-endian 64-bit values. A vector set is a 64-bit
//! little-endian count followed by that many PMVEC1 blocks back to back.
//! Images export as binary portable graymaps (P5, 8-bit), which any image
//! viewer opens; graymap export is lossy by design and always paired with
//! a PMVEC1 file when exactness matters.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::vector::Vector;

const MAGIC: &[u8; 6] = b"PMVEC1";

fn format_err(reason: impl Into<String>) -> Error {
    Error::Format {
        format: "pmvec",
        reason: reason.into(),
    }
}

/// Encodes a vector into PMVEC1 bytes.
pub fn to_pmvec_bytes(x: &Vector) -> Vec<u8> {
    let mut out = Vec::with_capacity(6 + 8 + 8 * x.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(x.len() as u64).to_le_bytes());
    for v in x.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes one PMVEC1 block from the front of `bytes`; returns the vector
/// and the number of bytes consumed.
pub(crate) fn split_pmvec(bytes: &[u8]) -> Result<(Vector, usize)> {
    if bytes.len() < 14 {
        return Err(format_err("truncated header"));
    }
    if &bytes[..6] != MAGIC {
        return Err(format_err(format!("bad magic {:?}", &bytes[..6])));
    }
    let len = u64::from_le_bytes(bytes[6..14].try_into().unwrap());
    let len: usize = len
        .try_into()
        .map_err(|_| format_err(format!("length {len} does not fit in memory")))?;
    let need = 14 + 8 * len;
    if bytes.len() < need {
        return Err(format_err(format!(
            "expected {len} values, payload holds {}",
            (bytes.len() - 14) / 8
        )));
    }
    let mut data = Vec::with_capacity(len);
    for chunk in bytes[14..need].chunks_exact(8) {
        data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }
    let v = Vector::new(data).map_err(|e| format_err(format!("invalid payload: {e}")))?;
    Ok((v, need))
}

/// Decodes PMVEC1 bytes; trailing bytes are an error.
pub fn from_pmvec_bytes(bytes: &[u8]) -> Result<Vector> {
    let (v, used) = split_pmvec(bytes)?;
    if used != bytes.len() {
        return Err(format_err(format!(
            "{} trailing bytes after payload",
            bytes.len() - used
        )));
    }
    Ok(v)
}

pub fn write_pmvec(path: &Path, x: &Vector) -> Result<()> {
    std::fs::write(path, to_pmvec_bytes(x)).map_err(|e| Error::io(path, e))
}

pub fn read_pmvec(path: &Path) -> Result<Vector> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_pmvec_bytes(&bytes)
}

/// Writes a dataset as a count header plus concatenated PMVEC1 blocks.
pub fn write_pmvec_set(path: &Path, vectors: &[Vector]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    w.write_all(&(vectors.len() as u64).to_le_bytes())
        .map_err(io_err)?;
    for v in vectors {
        w.write_all(&to_pmvec_bytes(v)).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_pmvec_set(path: &Path) -> Result<Vec<Vector>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 8 {
        return Err(format_err("truncated set header"));
    }
    let count = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    let mut offset = 8;
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let (v, used) = split_pmvec(&bytes[offset..])
            .map_err(|e| format_err(format!("block {i}: {e}")))?;
        out.push(v);
        offset += used;
    }
    if offset != bytes.len() {
        return Err(format_err(format!(
            "{} trailing bytes after {count} blocks",
            bytes.len() - offset
        )));
    }
    Ok(out)
}

/// Writes a square image as an 8-bit binary portable graymap. Values are
/// clamped to `[0, 1]` and quantized to 0..=255 by round-to-nearest.
pub fn write_pgm(path: &Path, side: usize, pixels: &Vector) -> Result<()> {
    if pixels.len() != side * side {
        return Err(Error::DimensionMismatch {
            expected: side * side,
            got: pixels.len(),
            context: "pgm export",
        });
    }
    let mut out = Vec::with_capacity(20 + pixels.len());
    out.extend_from_slice(format!("P5\n{side} {side}\n255\n").as_bytes());
    for &v in pixels.as_slice() {
        out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
