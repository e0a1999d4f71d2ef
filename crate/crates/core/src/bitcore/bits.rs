use crate::error::{Error, Result};
use crate::real::Real;

use super::DenseTensor;

pub const WORD_BITS: usize = 64;

/// How an exact zero is binarized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZeroPolicy {
    /// `sign(0) = +1`.
    #[default]
    Ceil,
    /// Zeros are rejected.
    Strict,
}

/// Sign of `v` as ±1 under the default zero policy.
#[inline]
pub fn sign<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one()
    } else {
        -T::one()
    }
}

/// Sign-binarized tensor, packed 64 elements per word along one axis.
///
/// Bit 1 encodes +1 and bit 0 encodes −1. Each row (one fiber along the
/// packing axis) starts on a fresh word; the unused high bits of the last word
/// of a row are zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitTensor {
    logical_shape: Vec<usize>,
    axis: usize,
    words_per_row: usize,
    words: Vec<u64>,
}

impl BitTensor {
    /// Builds a tensor packed along its last axis from raw words.
    pub fn from_words(logical_shape: Vec<usize>, words: Vec<u64>) -> Result<Self> {
        let axis = logical_shape
            .len()
            .checked_sub(1)
            .ok_or_else(|| Error::shape("packed tensor needs rank >= 1"))?;
        let row_len = logical_shape[axis];
        let words_per_row = row_len.div_ceil(WORD_BITS);
        let rows: usize = logical_shape[..axis].iter().product();
        if words.len() != rows * words_per_row {
            return Err(Error::shape(format!(
                "{} words cannot hold shape {:?}",
                words.len(),
                logical_shape
            )));
        }
        let mut t = BitTensor { logical_shape, axis, words_per_row, words };
        t.clear_padding();
        Ok(t)
    }

    pub fn logical_shape(&self) -> &[usize] {
        &self.logical_shape
    }

    pub fn axis(&self) -> usize {
        self.axis
    }

    /// Logical elements per row.
    pub fn row_len(&self) -> usize {
        self.logical_shape[self.axis]
    }

    pub fn words_per_row(&self) -> usize {
        self.words_per_row
    }

    /// Padding bits at the end of each row.
    pub fn pad_len(&self) -> usize {
        self.words_per_row * WORD_BITS - self.row_len()
    }

    pub fn rows(&self) -> usize {
        if self.words_per_row == 0 {
            self.logical_shape.iter().enumerate().filter(|&(i, _)| i != self.axis).map(|(_, &d)| d).product()
        } else {
            self.words.len() / self.words_per_row
        }
    }

    pub fn row(&self, r: usize) -> &[u64] {
        &self.words[r * self.words_per_row..(r + 1) * self.words_per_row]
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Raw word access. Callers may scribble on padding bits; every kernel
    /// masks them.
    pub fn words_mut(&mut self) -> &mut [u64] {
        &mut self.words
    }

    /// Shape with the packing axis moved last, i.e. the order rows are stored in.
    pub fn storage_shape(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self
            .logical_shape
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != self.axis)
            .map(|(_, &d)| d)
            .collect();
        s.push(self.row_len());
        s
    }

    /// Bytes needed for the packed words.
    pub fn storage_bytes(&self) -> usize {
        self.words.len() * 8
    }

    fn clear_padding(&mut self) {
        let mask = last_word_mask(self.row_len());
        if self.words_per_row == 0 || mask == u64::MAX {
            return;
        }
        for row in self.words.chunks_mut(self.words_per_row) {
            *row.last_mut().unwrap() &= mask;
        }
    }
}

/// Mask selecting the valid bits of the final word of a row of length `n`.
#[inline]
pub fn last_word_mask(n: usize) -> u64 {
    match n % WORD_BITS {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

/// Packs a contiguous row, 64 values per word.
pub(crate) fn pack_row<T: Real>(src: &[T], dst: &mut [u64]) {
    for (word, chunk) in dst.iter_mut().zip(src.chunks(WORD_BITS)) {
        *word = chunk.iter().enumerate().fold(0u64, |acc, (b, &x)| acc | (u64::from(x >= T::zero()) << b));
    }
}

/// Packs `v` along `axis`: bit = 1 iff the value is `>= 0`.
pub fn pack<T: Real>(v: &DenseTensor<T>, axis: usize, policy: ZeroPolicy) -> Result<BitTensor> {
    let shape = v.shape();
    if axis >= shape.len() {
        return Err(Error::invalid(format!("axis {axis} out of range for rank {}", shape.len())));
    }
    let outer: usize = shape[..axis].iter().product();
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let words_per_row = len.div_ceil(WORD_BITS);
    let mut words = vec![0u64; outer * inner * words_per_row];
    let data = v.data();
    if inner == 1 && policy == ZeroPolicy::Ceil {
        for (src, dst) in data.chunks(len.max(1)).zip(words.chunks_mut(words_per_row.max(1))) {
            pack_row(src, dst);
        }
        return Ok(BitTensor { logical_shape: shape.to_vec(), axis, words_per_row, words });
    }
    for o in 0..outer {
        for i in 0..inner {
            let row = &mut words[(o * inner + i) * words_per_row..][..words_per_row];
            for k in 0..len {
                let idx = (o * len + k) * inner + i;
                let x = data[idx];
                if policy == ZeroPolicy::Strict && x == T::zero() {
                    return Err(Error::ZeroValue { index: idx });
                }
                if x >= T::zero() {
                    row[k / WORD_BITS] |= 1u64 << (k % WORD_BITS);
                }
            }
        }
    }
    Ok(BitTensor { logical_shape: shape.to_vec(), axis, words_per_row, words })
}

/// Expands packed bits back to ±1 values in the original layout.
pub fn unpack<T: Real>(bits: &BitTensor) -> DenseTensor<T> {
    let shape = bits.logical_shape();
    let axis = bits.axis;
    let outer: usize = shape[..axis].iter().product();
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let mut data = vec![-T::one(); outer * len * inner];
    for o in 0..outer {
        for i in 0..inner {
            let row = bits.row(o * inner + i);
            for k in 0..len {
                if row[k / WORD_BITS] >> (k % WORD_BITS) & 1 == 1 {
                    data[(o * len + k) * inner + i] = T::one();
                }
            }
        }
    }
    DenseTensor::new(shape.to_vec(), data).expect("unpack preserves element count")
}

/// Number of positions where the first `n` bits of `a` and `b` differ.
#[inline]
pub(crate) fn masked_xor_popcount(a: &[u64], b: &[u64], n: usize) -> u32 {
    let full = n / WORD_BITS;
    let mut diff = 0u32;
    for w in 0..full {
        diff += (a[w] ^ b[w]).count_ones();
    }
    if n % WORD_BITS != 0 {
        diff += ((a[full] ^ b[full]) & last_word_mask(n)).count_ones();
    }
    diff
}

/// Σ aᵢ·bᵢ over the ±1 values encoded in the first `n` bits of two rows,
/// computed as `2·popcount(xnor(a, b)) − n`.
pub fn xnor_dot(a: &[u64], b: &[u64], n: usize) -> Result<i32> {
    let need = n.div_ceil(WORD_BITS);
    if a.len() != need || b.len() != need {
        return Err(Error::shape(format!(
            "rows of {} and {} words for logical length {n} (need {need})",
            a.len(),
            b.len()
        )));
    }
    let matches = n as i32 - masked_xor_popcount(a, b, n) as i32;
    Ok(2 * matches - n as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn packs_example_vector() {
        let v = DenseTensor::new(vec![4], vec![1.0f32, -1.0, -1.0, 1.0]).unwrap();
        let b = pack(&v, 0, ZeroPolicy::Strict).unwrap();
        assert_eq!(b.words(), &[0b1001]);
        assert_eq!(b.pad_len(), 60);
    }

    #[test]
    fn packs_full_word() {
        let v = DenseTensor::filled(&[64], 0.3f64);
        let b = pack(&v, 0, ZeroPolicy::Strict).unwrap();
        assert_eq!(b.words(), &[u64::MAX]);
        assert_eq!(b.pad_len(), 0);
    }

    #[test]
    fn strict_policy_reports_zero_index() {
        let v = DenseTensor::new(vec![2, 3], vec![1.0f32, 2.0, 3.0, -1.0, 0.0, 1.0]).unwrap();
        assert!(matches!(pack(&v, 1, ZeroPolicy::Strict), Err(Error::ZeroValue { index: 4 })));
        let b = pack(&v, 1, ZeroPolicy::Ceil).unwrap();
        assert_eq!(b.row(1), &[0b110]);
    }

    #[test]
    fn inner_axis_rows_follow_remaining_axes() {
        // shape [2, 3]: packing axis 0 yields three rows of two bits
        let v = DenseTensor::new(vec![2, 3], vec![1.0f32, -1.0, 1.0, 1.0, 1.0, -1.0]).unwrap();
        let b = pack(&v, 0, ZeroPolicy::Strict).unwrap();
        assert_eq!(b.rows(), 3);
        assert_eq!(b.row(0), &[0b11]);
        assert_eq!(b.row(1), &[0b10]);
        assert_eq!(b.row(2), &[0b01]);
        assert_eq!(b.storage_shape(), vec![3, 2]);
        assert_eq!(unpack::<f32>(&b), v);
    }

    #[test]
    fn xnor_dot_self_and_complement() {
        let a = [0xdead_beef_0123_4567u64];
        let c = [!a[0]];
        assert_eq!(xnor_dot(&a, &a, 64).unwrap(), 64);
        assert_eq!(xnor_dot(&a, &c, 64).unwrap(), -64);
    }

    #[test]
    fn xnor_dot_rejects_length_mismatch() {
        assert!(xnor_dot(&[0, 0], &[0], 70).is_err());
        assert!(xnor_dot(&[0], &[0], 70).is_err());
    }

    proptest! {
        #[test]
        fn padding_garbage_is_masked(n in 1usize..200, seed in any::<u64>(), junk in any::<u64>()) {
            let v = DenseTensor::from_fn(&[n], |i| if (seed >> (i % 64)) & 1 == 1 { 1.0f32 } else { -1.0 });
            let w = DenseTensor::from_fn(&[n], |i| if (seed.rotate_left(i as u32 % 64 + 7)) & 1 == 1 { 1.0f32 } else { -1.0 });
            let a = pack(&v, 0, ZeroPolicy::Strict).unwrap();
            let b = pack(&w, 0, ZeroPolicy::Strict).unwrap();
            let clean = xnor_dot(a.words(), b.words(), n).unwrap();
            let mut dirty = a.clone();
            let last = dirty.words().len() - 1;
            dirty.words_mut()[last] |= junk & !last_word_mask(n);
            prop_assert_eq!(xnor_dot(dirty.words(), b.words(), n).unwrap(), clean);
        }
    }
}
