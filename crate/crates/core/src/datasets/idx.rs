//! IDX reader/writer (the MNIST container format): a big-endian magic word
//! whose low byte is the number of dimensions, one big-endian u32 per
//! dimension, then raw unsigned bytes.

use std::fs;
use std::path::Path;

use super::Dataset;
use crate::error::{QmoeError, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| QmoeError::Data(format!("{}: {e}", path.display())))
}

/// Parses the header and returns (dims, payload).
fn parse<'a>(path: &Path, bytes: &'a [u8], magic: u32) -> Result<(Vec<usize>, &'a [u8])> {
    let n_dims = (magic & 0xff) as usize;
    let header_len = 4 * (1 + n_dims);
    if bytes.len() < 4 {
        return Err(QmoeError::Truncated {
            path: path.into(),
            needed: header_len,
            found: bytes.len(),
        });
    }
    let word = |i: usize| u32::from_be_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    let found = word(0);
    if found != magic {
        return Err(QmoeError::BadMagic {
            path: path.into(),
            found,
            expected: magic,
        });
    }
    if bytes.len() < header_len {
        return Err(QmoeError::Truncated {
            path: path.into(),
            needed: header_len,
            found: bytes.len(),
        });
    }
    let dims: Vec<usize> = (1..=n_dims).map(|i| word(i) as usize).collect();
    let needed = header_len + dims.iter().product::<usize>();
    if bytes.len() < needed {
        return Err(QmoeError::Truncated {
            path: path.into(),
            needed,
            found: bytes.len(),
        });
    }
    Ok((dims, &bytes[header_len..needed]))
}

/// Returns (count, rows, cols, pixels).
pub fn read_idx_images(path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let bytes = read_file(path)?;
    let (dims, payload) = parse(path, &bytes, IMAGES_MAGIC)?;
    Ok((dims[0], dims[1], dims[2], payload.to_vec()))
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = read_file(path)?;
    let (_, payload) = parse(path, &bytes, LABELS_MAGIC)?;
    Ok(payload.to_vec())
}

/// Loads an image/label file pair with pixels mapped to [0, 1].
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let (count, rows, cols, pixels) = read_idx_images(images_path)?;
    let labels = read_idx_labels(labels_path)?;
    if labels.len() != count {
        return Err(QmoeError::CountMismatch {
            images: count,
            labels: labels.len(),
        });
    }
    let pixel_count = rows * cols;
    let features = if pixel_count == 0 {
        vec![Vec::new(); count]
    } else {
        pixels
            .chunks_exact(pixel_count)
            .map(|img| img.iter().map(|&p| f64::from(p) / 255.0).collect())
            .collect()
    };
    let labels: Vec<usize> = labels.into_iter().map(usize::from).collect();
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    Dataset::new(
        features,
        labels,
        n_classes,
        vec![format!(
            "idx(images={}, labels={})",
            images_path.display(),
            labels_path.display()
        )],
    )
}

/// Writes features (expected in [0, 1], quantized to bytes) and labels as an
/// IDX pair with the given image shape.
pub fn write_idx(ds: &Dataset, images_path: &Path, labels_path: &Path, rows: usize, cols: usize) -> Result<()> {
    if ds.dim() != rows * cols && !ds.is_empty() {
        return Err(QmoeError::DimensionMismatch {
            expected: rows * cols,
            actual: ds.dim(),
            context: "image shape",
        });
    }
    let mut img = Vec::with_capacity(16 + ds.len() * rows * cols);
    img.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    for d in [ds.len(), rows, cols] {
        img.extend_from_slice(&(d as u32).to_be_bytes());
    }
    for row in ds.features() {
        img.extend(row.iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    }
    let mut lab = Vec::with_capacity(8 + ds.len());
    lab.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    for &l in ds.labels() {
        let byte = u8::try_from(l).map_err(|_| QmoeError::Data(format!("label {l} does not fit in a byte")))?;
        lab.push(byte);
    }
    fs::write(images_path, img).map_err(|e| QmoeError::io(images_path, e))?;
    fs::write(labels_path, lab).map_err(|e| QmoeError::io(labels_path, e))?;
    Ok(())
}
