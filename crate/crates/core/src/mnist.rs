//! IDX image and label files, raw or gzip-compressed.

use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use num_complex::Complex;

use crate::containers::{VectorRecord, VectorSet};
use crate::error::{FormatError, Result};
use crate::ofdm::zc_phase_sequence;
use crate::scalar::Real;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<Vec<u8>>,
}

fn inflate(bytes: Vec<u8>) -> Result<Vec<u8>> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&bytes[..]).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

fn header(bytes: &[u8], words: usize, magic: u32) -> Result<Vec<usize>> {
    let word = |i: usize| u32::from_be_bytes(bytes[4 * i..4 * i + 4].try_into().expect("4 bytes"));
    if bytes.len() >= 4 && word(0) != magic {
        return Err(FormatError::BadMagic { expected: format!("{magic:#010x}"), found: format!("{:#010x}", word(0)) }.into());
    }
    if bytes.len() < 4 * words {
        return Err(FormatError::Truncated { needed: 4 * words, available: bytes.len() }.into());
    }
    let w: Vec<u32> = (0..words).map(word).collect();
    Ok(w[1..].iter().map(|&v| v as usize).collect())
}

fn body(bytes: &[u8], offset: usize, len: usize) -> Result<&[u8]> {
    let needed = offset + len;
    if bytes.len() < needed {
        return Err(FormatError::Truncated { needed, available: bytes.len() }.into());
    }
    Ok(&bytes[offset..needed])
}

pub fn parse_images(bytes: Vec<u8>) -> Result<IdxImages> {
    let bytes = inflate(bytes)?;
    let dims = header(&bytes, 4, IMAGES_MAGIC)?;
    let (count, rows, cols) = (dims[0], dims[1], dims[2]);
    let size = rows * cols;
    let data = body(&bytes, 16, count * size)?;
    Ok(IdxImages { rows, cols, pixels: data.chunks(size.max(1)).take(count).map(<[u8]>::to_vec).collect() })
}

pub fn parse_labels(bytes: Vec<u8>) -> Result<Vec<u8>> {
    let bytes = inflate(bytes)?;
    let count = header(&bytes, 2, LABELS_MAGIC)?[0];
    Ok(body(&bytes, 8, count)?.to_vec())
}

/// Pixels scaled to `[0, 1]` and multiplied by the Zadoff-Chu phasors of the flattened length.
pub fn encode_image<T: Real>(pixels: &[u8]) -> Vec<Complex<T>> {
    let zc = zc_phase_sequence::<T>(pixels.len()).phasors();
    pixels.iter().zip(zc).map(|(&p, z)| z * T::of(p as f64 / 255.0)).collect()
}

pub fn load_mnist<T: Real>(images: &Path, labels: &Path) -> Result<VectorSet<T>> {
    let imgs = parse_images(std::fs::read(images)?)?;
    let labs = parse_labels(std::fs::read(labels)?)?;
    if imgs.pixels.len() != labs.len() {
        return Err(FormatError::SizeMismatch(format!("{} images but {} labels", imgs.pixels.len(), labs.len())).into());
    }
    let records = imgs
        .pixels
        .iter()
        .zip(labs)
        .map(|(p, label)| VectorRecord { label, values: encode_image(p) })
        .collect();
    Ok(VectorSet { dim: imgs.rows * imgs.cols, records })
}
