//! IDX archives (the handwritten-digit distribution format).

use std::path::Path;

use crate::bitcore::serial::ByteReader;
use crate::bitcore::DenseTensor;
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Raw unsigned-byte IDX payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

pub fn parse_idx(bytes: &[u8], expected_magic: u32) -> Result<IdxArray> {
    let mut r = ByteReader::new(bytes);
    let magic = r.u32_be()?;
    if magic != expected_magic {
        return Err(Error::format(0, format!("bad IDX magic {magic:#010x}, expected {expected_magic:#010x}")));
    }
    let rank = (magic & 0xff) as usize;
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        dims.push(r.u32_be()? as usize);
    }
    let len: usize = dims.iter().product();
    let data = r.bytes(len)?.to_vec();
    if r.remaining() != 0 {
        return Err(Error::format(r.position(), format!("{} trailing bytes", r.remaining())));
    }
    Ok(IdxArray { dims, data })
}

pub fn encode_idx(array: &IdxArray) -> Vec<u8> {
    let magic = 0x0800 | array.dims.len() as u32;
    let mut out = magic.to_be_bytes().to_vec();
    for &d in &array.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&array.data);
    out
}

/// Images as `[N, 1, H, W]` in `[0, 1]` with their class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledImages {
    pub images: DenseTensor<f32>,
    pub labels: Vec<u8>,
}

impl LabelledImages {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| m as usize + 1)
    }
}

pub fn decode_idx_pair(images: &[u8], labels: &[u8]) -> Result<LabelledImages> {
    let img = parse_idx(images, IMAGES_MAGIC)?;
    let lab = parse_idx(labels, LABELS_MAGIC)?;
    if img.dims[0] != lab.dims[0] {
        return Err(Error::InvalidArgument(format!("{} images but {} labels", img.dims[0], lab.dims[0])));
    }
    let shape = [img.dims[0], 1, img.dims[1], img.dims[2]];
    let data = img.data.iter().map(|&b| f32::from(b) / 255.0).collect();
    Ok(LabelledImages { images: DenseTensor::new(shape.to_vec(), data)?, labels: lab.data })
}

/// Reads an image archive and its label archive.
pub fn load_idx_archive(images: &Path, labels: &Path) -> Result<LabelledImages> {
    decode_idx_pair(&std::fs::read(images)?, &std::fs::read(labels)?)
}
