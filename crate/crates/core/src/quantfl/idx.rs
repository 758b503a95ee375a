//! Reader for the IDX format used by the classic handwritten-digit files.
//!
//! Layout: two zero bytes, a type byte (0x08 = unsigned byte), a dimension
//! count, one big-endian `u32` per dimension, then the raw data.

use std::fs;
use std::path::Path;

use super::data::Dataset;
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return Err(Error::Idx("missing magic number".into()));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::Idx("magic must start with two zero bytes".into()));
    }
    if bytes[2] != 0x08 {
        return Err(Error::Idx(format!(
            "unsupported element type 0x{:02x}",
            bytes[2]
        )));
    }
    let ndims = bytes[3] as usize;
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(Error::Idx("truncated dimension sizes".into()));
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Idx("dimension product overflows".into()))?;
    let data = &bytes[header..];
    if data.len() != count {
        return Err(Error::Idx(format!(
            "expected {count} data bytes, found {}",
            data.len()
        )));
    }
    Ok(IdxArray {
        dims,
        data: data.to_vec(),
    })
}

pub fn encode_idx(array: &IdxArray) -> Vec<u8> {
    let mut out = vec![0, 0, 0x08, array.dims.len() as u8];
    for &d in &array.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&array.data);
    out
}

/// Combines an image file and a label file; pixels are scaled into `[0, 1]`.
pub fn dataset_from_idx(
    images: &[u8],
    labels: &[u8],
    limit: Option<usize>,
    classes: usize,
) -> Result<Dataset> {
    let magic = |b: &[u8]| {
        b.get(..4)
            .map(|m| u32::from_be_bytes([m[0], m[1], m[2], m[3]]))
    };
    if magic(images) != Some(IMAGES_MAGIC) {
        return Err(Error::Idx("image file magic is not 0x00000803".into()));
    }
    if magic(labels) != Some(LABELS_MAGIC) {
        return Err(Error::Idx("label file magic is not 0x00000801".into()));
    }
    let images = parse_idx(images)?;
    let labels = parse_idx(labels)?;
    if images.dims[0] != labels.dims[0] {
        return Err(Error::Idx(format!(
            "{} images but {} labels",
            images.dims[0], labels.dims[0]
        )));
    }
    let take = limit.map_or(images.dims[0], |l| l.min(images.dims[0]));
    let dim: usize = images.dims[1..].iter().product();
    let features = images.data[..take * dim]
        .iter()
        .map(|&p| p as f64 / 255.0)
        .collect();
    let labels = labels.data[..take].iter().map(|&l| l as usize).collect();
    Dataset::new(features, dim, labels, classes)
}

pub fn load_idx_dataset(
    images: &Path,
    labels: &Path,
    limit: Option<usize>,
    classes: usize,
) -> Result<Dataset> {
    dataset_from_idx(&fs::read(images)?, &fs::read(labels)?, limit, classes)
}
