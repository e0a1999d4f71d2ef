use crate::error::{Error, Result};
use crate::real::Real;

use super::bits::masked_xor_popcount;
use super::{BitTensor, DenseTensor};

/// Output extent of a convolution along one spatial axis.
pub fn conv_out_dim(input: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::invalid("stride must be positive"));
    }
    let padded = input + 2 * padding;
    if padded < kernel {
        return Err(Error::shape(format!("kernel {kernel} larger than padded input {padded}")));
    }
    Ok((padded - kernel) / stride + 1)
}

/// XNOR-popcount convolution.
///
/// `x_bits` is an `[N, C, H, W]` tensor and `w_bits` an `[F, C, kh, kw]`
/// tensor, both packed along the channel axis. Spatial padding contributes
/// −1 inputs. Every output is `alpha[f]` times an exact integer correlation.
pub fn binary_conv2d<T: Real>(
    x_bits: &BitTensor,
    w_bits: &BitTensor,
    alpha: &[T],
    stride: usize,
    padding: usize,
) -> Result<DenseTensor<T>> {
    let (n, c, h, w) = match *x_bits.logical_shape() {
        [n, c, h, w] if x_bits.axis() == 1 => (n, c, h, w),
        _ => return Err(Error::shape("input must be [N, C, H, W] packed along channels")),
    };
    let (f, wc, kh, kw) = match *w_bits.logical_shape() {
        [f, wc, kh, kw] if w_bits.axis() == 1 => (f, wc, kh, kw),
        _ => return Err(Error::shape("weights must be [F, C, kh, kw] packed along channels")),
    };
    if c != wc {
        return Err(Error::shape(format!("input has {c} channels, weights expect {wc}")));
    }
    if alpha.len() != f {
        return Err(Error::shape(format!("{} scales for {f} filters", alpha.len())));
    }
    if let Some(bad) = alpha.iter().position(|&a| !(a > T::zero()) || !a.is_finite()) {
        return Err(Error::invalid(format!("alpha[{bad}] must be positive and finite")));
    }
    let ho = conv_out_dim(h, kh, stride, padding)?;
    let wo = conv_out_dim(w, kw, stride, padding)?;
    let wpr = x_bits.words_per_row();
    let zero_row = vec![0u64; wpr];
    let taps = kh * kw;
    let volume = (taps * c) as i32;
    let mut out = vec![T::zero(); n * f * ho * wo];
    let mut rows: Vec<&[u64]> = Vec::with_capacity(taps);
    for b in 0..n {
        for oi in 0..ho {
            for oj in 0..wo {
                rows.clear();
                for ki in 0..kh {
                    for kj in 0..kw {
                        let ii = (oi * stride + ki) as isize - padding as isize;
                        let jj = (oj * stride + kj) as isize - padding as isize;
                        if ii < 0 || jj < 0 || ii >= h as isize || jj >= w as isize {
                            rows.push(&zero_row);
                        } else {
                            rows.push(x_bits.row((b * h + ii as usize) * w + jj as usize));
                        }
                    }
                }
                for (fi, &a) in alpha.iter().enumerate() {
                    let mut diff = 0i32;
                    for (t, row) in rows.iter().enumerate() {
                        diff += masked_xor_popcount(row, w_bits.row(fi * taps + t), c) as i32;
                    }
                    out[((b * f + fi) * ho + oi) * wo + oj] = a * T::of((volume - 2 * diff) as f64);
                }
            }
        }
    }
    DenseTensor::new(vec![n, f, ho, wo], out)
}

/// Direct six-loop real-valued cross-correlation, the scalar baseline the
/// bit kernel is benchmarked against. `pad_value` fills the spatial border.
pub fn naive_conv2d<T: Real>(
    x: &DenseTensor<T>,
    weights: &DenseTensor<T>,
    stride: usize,
    padding: usize,
    pad_value: T,
) -> Result<DenseTensor<T>> {
    let (n, c, h, w) = x.dims4()?;
    let (f, wc, kh, kw) = weights.dims4()?;
    if c != wc {
        return Err(Error::shape(format!("input has {c} channels, weights expect {wc}")));
    }
    let ho = conv_out_dim(h, kh, stride, padding)?;
    let wo = conv_out_dim(w, kw, stride, padding)?;
    let xd = x.data();
    let wd = weights.data();
    let mut out = vec![T::zero(); n * f * ho * wo];
    for b in 0..n {
        for fi in 0..f {
            for oi in 0..ho {
                for oj in 0..wo {
                    let mut acc = T::zero();
                    for ci in 0..c {
                        for ki in 0..kh {
                            for kj in 0..kw {
                                let ii = (oi * stride + ki) as isize - padding as isize;
                                let jj = (oj * stride + kj) as isize - padding as isize;
                                let v = if ii < 0 || jj < 0 || ii >= h as isize || jj >= w as isize {
                                    pad_value
                                } else {
                                    xd[((b * c + ci) * h + ii as usize) * w + jj as usize]
                                };
                                acc += v * wd[((fi * c + ci) * kh + ki) * kw + kj];
                            }
                        }
                    }
                    out[((b * f + fi) * ho + oi) * wo + oj] = acc;
                }
            }
        }
    }
    DenseTensor::new(vec![n, f, ho, wo], out)
}
