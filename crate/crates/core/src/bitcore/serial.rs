//! Canonical little-endian tensor encoding.
//!
//! ```text
//! "BNT1" | dtype u8 | rank u8 | extents u32 LE × rank | payload
//! ```
//!
//! dtype 1 is dense f32 (payload: values as f32 LE). dtype 2 is packed bits
//! (payload: u64 LE words, then a u8 pad length); extents are the storage
//! shape with the packing axis last. dtype 3 is reserved for a future format
//! carrying per-position input scales.

use std::io::Write;

use crate::error::{Error, Result};

use super::{BitTensor, DenseTensor, WORD_BITS};

pub const MAGIC: &[u8; 4] = b"BNT1";
pub const DTYPE_F32: u8 = 1;
pub const DTYPE_BITS: u8 = 2;
pub const DTYPE_RESERVED_SCALED: u8 = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum StoredTensor {
    Dense(DenseTensor<f32>),
    Bits(BitTensor),
}

fn write_header<W: Write>(out: &mut W, dtype: u8, shape: &[usize]) -> Result<()> {
    if shape.len() > u8::MAX as usize {
        return Err(Error::invalid("tensor rank exceeds 255"));
    }
    out.write_all(MAGIC)?;
    out.write_all(&[dtype, shape.len() as u8])?;
    for &d in shape {
        let d = u32::try_from(d).map_err(|_| Error::invalid("extent exceeds u32"))?;
        out.write_all(&d.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_dense<W: Write>(out: &mut W, t: &DenseTensor<f32>) -> Result<()> {
    write_header(out, DTYPE_F32, t.shape())?;
    let mut buf = Vec::with_capacity(t.len() * 4);
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn write_bits<W: Write>(out: &mut W, t: &BitTensor) -> Result<()> {
    write_header(out, DTYPE_BITS, &t.storage_shape())?;
    let mut buf = Vec::with_capacity(t.words().len() * 8 + 1);
    for w in t.words() {
        buf.extend_from_slice(&w.to_le_bytes());
    }
    buf.push(t.pad_len() as u8);
    out.write_all(&buf)?;
    Ok(())
}

pub fn encode_dense(t: &DenseTensor<f32>) -> Vec<u8> {
    let mut v = Vec::new();
    write_dense(&mut v, t).expect("writing to a Vec cannot fail");
    v
}

pub fn encode_bits(t: &BitTensor) -> Vec<u8> {
    let mut v = Vec::new();
    write_bits(&mut v, t).expect("writing to a Vec cannot fail");
    v
}

/// Cursor over a byte slice that reports the offset of any truncation.
#[derive(Debug)]
pub struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        ByteReader { buf, pos: 0 }
    }

    pub fn position(&self) -> u64 {
        self.pos as u64
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::format(
                self.buf.len() as u64,
                format!("truncated: needed {n} bytes at offset {}", self.pos),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes(1)?[0])
    }

    pub fn u32_le(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    pub fn u32_be(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    pub fn u64_le(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    pub fn f32_le(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    pub fn f64_le(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
}

pub fn read_tensor(r: &mut ByteReader<'_>) -> Result<StoredTensor> {
    let start = r.position();
    if r.bytes(4)? != MAGIC {
        return Err(Error::format(start, "bad tensor magic"));
    }
    let dtype_at = r.position();
    let dtype = r.u8()?;
    let rank = r.u8()? as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(r.u32_le()? as usize);
    }
    let count: usize = shape.iter().product();
    match dtype {
        DTYPE_F32 => {
            let raw = r.bytes(count * 4)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            Ok(StoredTensor::Dense(DenseTensor::new(shape, data)?))
        }
        DTYPE_BITS => {
            if rank == 0 {
                return Err(Error::format(dtype_at, "packed tensor with rank 0"));
            }
            let row_len = shape[rank - 1];
            let rows: usize = shape[..rank - 1].iter().product();
            let nwords = rows * row_len.div_ceil(WORD_BITS);
            let mut words = Vec::with_capacity(nwords);
            for _ in 0..nwords {
                words.push(r.u64_le()?);
            }
            let pad_at = r.position();
            let pad = r.u8()? as usize;
            let expected = row_len.div_ceil(WORD_BITS) * WORD_BITS - row_len;
            if pad != expected {
                return Err(Error::format(pad_at, format!("pad length {pad}, expected {expected}")));
            }
            Ok(StoredTensor::Bits(BitTensor::from_words(shape, words)?))
        }
        DTYPE_RESERVED_SCALED => Err(Error::format(dtype_at, "dtype 3 is reserved")),
        other => Err(Error::format(dtype_at, format!("unknown dtype {other}"))),
    }
}

pub fn decode(bytes: &[u8]) -> Result<StoredTensor> {
    let mut r = ByteReader::new(bytes);
    let t = read_tensor(&mut r)?;
    if r.remaining() != 0 {
        return Err(Error::format(r.position(), "trailing bytes after tensor"));
    }
    Ok(t)
}

pub fn read_dense(r: &mut ByteReader<'_>) -> Result<DenseTensor<f32>> {
    let at = r.position();
    match read_tensor(r)? {
        StoredTensor::Dense(t) => Ok(t),
        StoredTensor::Bits(_) => Err(Error::format(at, "expected dense tensor")),
    }
}
