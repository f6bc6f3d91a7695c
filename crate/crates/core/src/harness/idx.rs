//! IDX files as used by the MNIST distribution.

use std::path::Path;

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Grayscale images stored row-major, one byte per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<Vec<u8>>,
}

impl ImageSet {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(Error::TruncatedFile)
}

pub fn parse_images(bytes: &[u8]) -> Result<ImageSet> {
    let magic = read_u32(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let n = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let size = rows * cols;
    let body = &bytes[16..];
    if body.len() < n * size {
        return Err(Error::TruncatedFile);
    }
    Ok(ImageSet {
        rows,
        cols,
        pixels: body
            .chunks_exact(size.max(1))
            .take(n)
            .map(<[u8]>::to_vec)
            .collect(),
    })
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_u32(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let n = read_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() < n {
        return Err(Error::TruncatedFile);
    }
    Ok(body[..n].to_vec())
}

pub fn encode_images(set: &ImageSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + set.len() * set.rows * set.cols);
    for v in [
        IMAGES_MAGIC,
        set.len() as u32,
        set.rows as u32,
        set.cols as u32,
    ] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for p in &set.pixels {
        out.extend_from_slice(p);
    }
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

pub fn ingest_idx(path: &Path) -> Result<ImageSet> {
    parse_images(&std::fs::read(path)?)
}

pub fn ingest_labels(path: &Path) -> Result<Vec<u8>> {
    parse_labels(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four() -> ImageSet {
        ImageSet {
            rows: 28,
            cols: 28,
            pixels: (0..4u8)
                .map(|i| (0..784).map(|k| (k as u8).wrapping_mul(i)).collect())
                .collect(),
        }
    }

    #[test]
    fn images_round_trip() {
        let set = four();
        assert_eq!(parse_images(&encode_images(&set)).unwrap(), set);
        let labels = vec![0, 1, 2, 9];
        assert_eq!(parse_labels(&encode_labels(&labels)).unwrap(), labels);
    }

    #[test]
    fn malformed_files() {
        assert!(matches!(parse_images(&[]), Err(Error::TruncatedFile)));
        let mut bytes = encode_images(&four());
        assert!(matches!(parse_labels(&bytes), Err(Error::BadMagic(0x803))));
        bytes.truncate(100);
        assert!(matches!(parse_images(&bytes), Err(Error::TruncatedFile)));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.idx");
        std::fs::write(&p, encode_images(&four())).unwrap();
        assert_eq!(ingest_idx(&p).unwrap().len(), 4);
    }
}
