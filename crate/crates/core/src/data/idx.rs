//! IDX (MNIST-style) image and label files.

use std::path::Path;

use crate::error::{Error, Result};
use crate::mapping::LabeledDataset;
use crate::nn::Matrix;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, what: &'static str) -> Result<u32> {
    let chunk = bytes.get(at..at + 4).ok_or(Error::Truncated {
        what,
        needed: at + 4,
        available: bytes.len(),
    })?;
    Ok(u32::from_be_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]))
}

fn check_magic(bytes: &[u8], expected: u32, what: &'static str) -> Result<()> {
    let found = be_u32(bytes, 0, what)?;
    if found != expected {
        return Err(Error::BadMagic { expected, found });
    }
    Ok(())
}

/// Parse in-memory IDX images and labels; pixels are scaled to `[0, 1]`.
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<LabeledDataset> {
    check_magic(images, IMAGES_MAGIC, "image header")?;
    let n = be_u32(images, 4, "image header")? as usize;
    let rows = be_u32(images, 8, "image header")? as usize;
    let cols = be_u32(images, 12, "image header")? as usize;
    check_magic(labels, LABELS_MAGIC, "label header")?;
    let n_labels = be_u32(labels, 4, "label header")? as usize;
    if n != n_labels {
        return Err(Error::CountMismatch {
            images: n,
            labels: n_labels,
        });
    }
    let pixels = rows.checked_mul(cols);
    let total = pixels.and_then(|p| p.checked_mul(n)).and_then(|t| t.checked_add(16));
    let needed = total.unwrap_or(usize::MAX);
    if images.len() < needed {
        return Err(Error::Truncated {
            what: "image data",
            needed,
            available: images.len(),
        });
    }
    if labels.len() < 8 + n {
        return Err(Error::Truncated {
            what: "label data",
            needed: 8 + n,
            available: labels.len(),
        });
    }
    let dim = rows * cols;
    let data = images[16..16 + n * dim].iter().map(|&b| b as f64 / 255.0).collect();
    let raw: Vec<i64> = labels[8..8 + n].iter().map(|&b| b as i64).collect();
    LabeledDataset::from_raw_labels(Matrix::from_vec(n, dim, data)?, &raw)
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let ip = images_path.as_ref();
    let lp = labels_path.as_ref();
    let images = std::fs::read(ip).map_err(|e| Error::io(ip, e))?;
    let labels = std::fs::read(lp).map_err(|e| Error::io(lp, e))?;
    parse_idx(&images, &labels)
}
