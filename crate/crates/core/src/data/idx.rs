//! IDX codec for the MNIST image and label files: a big-endian `u32` magic,
//! one big-endian `u32` per dimension, then unsigned bytes.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdxError {
    #[error("idx: bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("idx: truncated file, need {expected} bytes but found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("idx: {trailing} unexpected bytes after the data")]
    TrailingBytes { trailing: usize },
    #[error("idx: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
}

/// Decoded image file: `count` images of `rows × cols` pixels, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn header(bytes: &[u8], magic: u32, ndims: usize) -> Result<Vec<usize>, IdxError> {
    let need = 4 * (1 + ndims);
    if bytes.len() < need {
        return Err(IdxError::Truncated {
            expected: need,
            found: bytes.len(),
        });
    }
    let word = |i: usize| u32::from_be_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    let found = word(0);
    if found != magic {
        return Err(IdxError::BadMagic { expected: magic, found });
    }
    Ok((1..=ndims).map(|i| word(i) as usize).collect())
}

fn body(bytes: &[u8], offset: usize, len: usize) -> Result<&[u8], IdxError> {
    let expected = offset + len;
    if bytes.len() < expected {
        return Err(IdxError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(IdxError::TrailingBytes {
            trailing: bytes.len() - expected,
        });
    }
    Ok(&bytes[offset..])
}

pub fn parse_images(bytes: &[u8]) -> Result<IdxImages, IdxError> {
    let dims = header(bytes, IMAGES_MAGIC, 3)?;
    let (count, rows, cols) = (dims[0], dims[1], dims[2]);
    let pixels = body(bytes, 16, count * rows * cols)?.to_vec();
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>, IdxError> {
    let dims = header(bytes, LABELS_MAGIC, 1)?;
    Ok(body(bytes, 8, dims[0])?.to_vec())
}

pub fn encode_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [IMAGES_MAGIC, images.count as u32, images.rows as u32, images.cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

pub fn read_images(path: &Path) -> crate::Result<IdxImages> {
    Ok(parse_images(&fs::read(path)?)?)
}

pub fn read_labels(path: &Path) -> crate::Result<Vec<u8>> {
    Ok(parse_labels(&fs::read(path)?)?)
}

pub fn write_images(path: &Path, images: &IdxImages) -> crate::Result<()> {
    fs::File::create(path)?.write_all(&encode_images(images))?;
    Ok(())
}

pub fn write_labels(path: &Path, labels: &[u8]) -> crate::Result<()> {
    fs::File::create(path)?.write_all(&encode_labels(labels))?;
    Ok(())
}
