//! `WISEWTS1` weight files and `WISEVEC1` vector files. Little-endian throughout; complex
//! values are interleaved 32-bit floats.

use std::path::Path;

use num_complex::Complex;

use crate::error::{FormatError, Result};
use crate::matrix::CMatrix;
use crate::scalar::Real;

pub const WEIGHTS_MAGIC: &[u8; 8] = b"WISEWTS1";
pub const VECTORS_MAGIC: &[u8; 8] = b"WISEVEC1";

#[derive(Debug, Clone, PartialEq)]
pub struct VectorRecord<T> {
    pub label: u8,
    pub values: Vec<Complex<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorSet<T> {
    pub dim: usize,
    pub records: Vec<VectorRecord<T>>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], FormatError> {
        if self.pos + n > self.bytes.len() {
            return Err(FormatError::Truncated { needed: self.pos + n, available: self.bytes.len() });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn complex<T: Real>(&mut self) -> std::result::Result<Complex<T>, FormatError> {
        let b = self.take(8)?;
        let re = f32::from_le_bytes(b[..4].try_into().expect("4 bytes"));
        let im = f32::from_le_bytes(b[4..].try_into().expect("4 bytes"));
        Ok(Complex::new(T::of(re as f64), T::of(im as f64)))
    }
}

fn check_magic(bytes: &[u8], magic: &[u8; 8]) -> std::result::Result<(), FormatError> {
    if bytes.len() < 8 {
        return Err(FormatError::Truncated { needed: 8, available: bytes.len() });
    }
    if &bytes[..8] != magic {
        return Err(FormatError::BadMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found: String::from_utf8_lossy(&bytes[..8]).into_owned(),
        });
    }
    Ok(())
}

fn push_complex<T: Real>(out: &mut Vec<u8>, v: Complex<T>) {
    out.extend_from_slice(&(v.re.as_f64() as f32).to_le_bytes());
    out.extend_from_slice(&(v.im.as_f64() as f32).to_le_bytes());
}

fn dim_u32(n: usize, what: &str) -> std::result::Result<u32, FormatError> {
    u32::try_from(n).map_err(|_| FormatError::BadDimension(format!("{what} {n} exceeds 32 bits")))
}

pub fn encode_weights<T: Real>(layers: &[CMatrix<T>]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&dim_u32(layers.len(), "layer count")?.to_le_bytes());
    for layer in layers {
        out.extend_from_slice(&dim_u32(layer.rows(), "rows")?.to_le_bytes());
        out.extend_from_slice(&dim_u32(layer.cols(), "cols")?.to_le_bytes());
        for &v in layer.as_slice() {
            push_complex(&mut out, v);
        }
    }
    Ok(out)
}

pub fn decode_weights<T: Real>(bytes: &[u8]) -> Result<Vec<CMatrix<T>>> {
    check_magic(bytes, WEIGHTS_MAGIC)?;
    let mut r = Reader { bytes, pos: 8 };
    let count = r.u32()? as usize;
    let mut layers = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let entries = rows
            .checked_mul(cols)
            .ok_or_else(|| FormatError::BadDimension(format!("{rows}x{cols} overflows")))?;
        let needed = entries.checked_mul(8).and_then(|b| b.checked_add(r.pos));
        match needed {
            Some(n) if n <= bytes.len() => {}
            Some(n) => return Err(FormatError::Truncated { needed: n, available: bytes.len() }.into()),
            None => return Err(FormatError::BadDimension(format!("{rows}x{cols} overflows")).into()),
        }
        let data = (0..entries).map(|_| r.complex()).collect::<std::result::Result<Vec<_>, _>>()?;
        layers.push(CMatrix::from_vec(rows, cols, data)?);
    }
    if r.pos != bytes.len() {
        return Err(FormatError::SizeMismatch(format!("{} trailing bytes after the last layer", bytes.len() - r.pos)).into());
    }
    Ok(layers)
}

pub fn encode_vectors<T: Real>(set: &VectorSet<T>) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(16 + set.records.len() * (1 + 8 * set.dim));
    out.extend_from_slice(VECTORS_MAGIC);
    out.extend_from_slice(&dim_u32(set.records.len(), "record count")?.to_le_bytes());
    out.extend_from_slice(&dim_u32(set.dim, "dim")?.to_le_bytes());
    for rec in &set.records {
        if rec.values.len() != set.dim {
            return Err(FormatError::SizeMismatch(format!("record of length {} in a set of dim {}", rec.values.len(), set.dim)).into());
        }
        out.push(rec.label);
        for &v in &rec.values {
            push_complex(&mut out, v);
        }
    }
    Ok(out)
}

pub fn decode_vectors<T: Real>(bytes: &[u8]) -> Result<VectorSet<T>> {
    check_magic(bytes, VECTORS_MAGIC)?;
    let mut r = Reader { bytes, pos: 8 };
    let count = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let expected = (dim as u128 * 8 + 1) * count as u128 + 16;
    if (bytes.len() as u128) < expected {
        return Err(FormatError::Truncated { needed: expected.min(usize::MAX as u128) as usize, available: bytes.len() }.into());
    }
    if bytes.len() as u128 != expected {
        return Err(FormatError::SizeMismatch(format!("file is {} bytes, header implies {expected}", bytes.len())).into());
    }
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let label = r.take(1)?[0];
        let values = (0..dim).map(|_| r.complex()).collect::<std::result::Result<Vec<_>, _>>()?;
        records.push(VectorRecord { label, values });
    }
    Ok(VectorSet { dim, records })
}

pub fn read_weights<T: Real>(path: &Path) -> Result<Vec<CMatrix<T>>> {
    decode_weights(&std::fs::read(path)?)
}

pub fn write_weights<T: Real>(path: &Path, layers: &[CMatrix<T>]) -> Result<()> {
    Ok(std::fs::write(path, encode_weights(layers)?)?)
}

pub fn read_vectors<T: Real>(path: &Path) -> Result<VectorSet<T>> {
    decode_vectors(&std::fs::read(path)?)
}

pub fn write_vectors<T: Real>(path: &Path, set: &VectorSet<T>) -> Result<()> {
    Ok(std::fs::write(path, encode_vectors(set)?)?)
}
