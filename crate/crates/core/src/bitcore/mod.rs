//! Dense and bit-packed tensors and the XNOR-popcount kernels.

mod bits;
mod conv;
pub mod serial;
mod tensor;

pub use bits::{last_word_mask, pack, sign, unpack, xnor_dot, BitTensor, ZeroPolicy, WORD_BITS};
pub use conv::{binary_conv2d, conv_out_dim, naive_conv2d};
pub use tensor::DenseTensor;

use crate::error::Result;
use crate::real::Real;

/// Packs each filter of `w` (axis 0) as one flat row of bits. This is the
/// compact storage layout: no per-channel word padding.
pub fn pack_filters<T: Real>(w: &DenseTensor<T>) -> Result<BitTensor> {
    let f = w.shape().first().copied().unwrap_or(0);
    let n = w.len() / f.max(1);
    let words_per_row = n.div_ceil(WORD_BITS);
    let mut words = vec![0u64; f * words_per_row];
    if n > 0 {
        for (src, dst) in w.data().chunks(n).zip(words.chunks_mut(words_per_row)) {
            bits::pack_row(src, dst);
        }
    }
    BitTensor::from_words(vec![f, n], words)
}

/// Bytes needed to store a binarized weight tensor: packed words plus one
/// f32 scale per filter, against `4 * len` bytes for the f32 original.
pub fn packed_weight_bytes(bits: &BitTensor, num_scales: usize) -> usize {
    bits.storage_bytes() + 4 * num_scales
}
