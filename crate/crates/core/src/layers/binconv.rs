use crate::binarize::{weight_scale, ApproxSpec, ScaleGranularity};
use crate::bitcore::{binary_conv2d, pack, sign, DenseTensor, ZeroPolicy};
use crate::error::{Error, Result};
use crate::real::Real;

use super::conv::{conv2d_real, conv2d_real_backward};

/// Gradient clip of the straight-through estimator.
pub const STE_CLIP: f64 = 1.0;

/// How the input features of a binary layer are treated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureMode {
    Real,
    Smooth(ApproxSpec),
    Hard,
}

/// How the weights of a binary layer are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    Real,
    /// `alpha[f] · sign(w)` with a per-filter mean-|w| scale.
    Binary,
}

impl FeatureMode {
    /// Value used for spatial padding: binarized feature maps pad with −1.
    pub fn pad_value<T: Real>(&self) -> T {
        match self {
            FeatureMode::Real => T::zero(),
            _ => -T::one(),
        }
    }

    pub fn apply<T: Real>(&self, x: &DenseTensor<T>) -> Result<DenseTensor<T>> {
        match self {
            FeatureMode::Real => Ok(x.clone()),
            FeatureMode::Smooth(spec) => crate::binarize::approx_forward(x, spec),
            FeatureMode::Hard => {
                x.ensure_finite()?;
                Ok(x.map(sign))
            }
        }
    }

    /// Chains an upstream gradient through the feature transform.
    pub fn backward<T: Real>(&self, x: &DenseTensor<T>, upstream: DenseTensor<T>) -> Result<DenseTensor<T>> {
        match self {
            FeatureMode::Real => Ok(upstream),
            FeatureMode::Smooth(spec) => {
                let spec = *spec;
                x.zip_map(&upstream, |v, g| g * spec.derivative(v))
            }
            FeatureMode::Hard => crate::binarize::ste_backward(x, &upstream, T::of(STE_CLIP)),
        }
    }
}

/// Effective weights and scales used by a forward pass.
#[derive(Debug, Clone)]
pub struct BinaryWeights<T> {
    pub effective: DenseTensor<T>,
    pub alpha: Vec<T>,
}

pub fn effective_weights<T: Real>(w: &DenseTensor<T>, mode: WeightMode) -> Result<BinaryWeights<T>> {
    match mode {
        WeightMode::Real => Ok(BinaryWeights { effective: w.clone(), alpha: Vec::new() }),
        WeightMode::Binary => {
            let alpha = weight_scale(w, ScaleGranularity::PerFilter)?;
            let per = w.len() / alpha.len();
            let data = w.data().iter().enumerate().map(|(i, &v)| alpha[i / per] * sign(v)).collect();
            Ok(BinaryWeights { effective: DenseTensor::new(w.shape().to_vec(), data)?, alpha })
        }
    }
}

/// Gradient of the latent weights given the gradient of the effective ones.
///
/// For binary weights `wb = alpha(w)·sign(w)` with `alpha = mean|w|`: the sign
/// path uses the clipped straight-through rule and the scale path is
/// differentiated exactly.
pub fn weight_backward<T: Real>(w: &DenseTensor<T>, alpha: &[T], mode: WeightMode, d_eff: DenseTensor<T>) -> Result<DenseTensor<T>> {
    match mode {
        WeightMode::Real => Ok(d_eff),
        WeightMode::Binary => {
            let per = w.len() / alpha.len();
            let mut out = vec![T::zero(); w.len()];
            let clip = T::of(STE_CLIP);
            for (f, &a) in alpha.iter().enumerate() {
                let ws = &w.data()[f * per..][..per];
                let gs = &d_eff.data()[f * per..][..per];
                let coupling = ws.iter().zip(gs).map(|(&wi, &gi)| gi * sign(wi)).sum::<T>() / T::of(per as f64);
                for i in 0..per {
                    let ste = if ws[i].abs() <= clip { gs[i] * a } else { T::zero() };
                    out[f * per + i] = ste + sign(ws[i]) * coupling;
                }
            }
            DenseTensor::new(w.shape().to_vec(), out)
        }
    }
}

/// Saved state for [`conv2d_binary_backward`].
#[derive(Debug, Clone)]
pub struct BinaryConvCache<T> {
    pub features: DenseTensor<T>,
    pub weights: BinaryWeights<T>,
}

/// Binary convolution layer: binarize features and weights, then convolve.
///
/// With hard features and binary weights and `bit_kernels` set, the product
/// runs on packed XNOR-popcount kernels and is integer exact.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_binary<T: Real>(
    x: &DenseTensor<T>,
    w: &DenseTensor<T>,
    features: FeatureMode,
    weights: WeightMode,
    stride: usize,
    padding: usize,
    bit_kernels: bool,
) -> Result<(DenseTensor<T>, BinaryConvCache<T>)> {
    let xb = features.apply(x)?;
    let wb = effective_weights(w, weights)?;
    let out = if bit_kernels && features == FeatureMode::Hard && weights == WeightMode::Binary {
        let xbits = pack(x, 1, ZeroPolicy::Ceil)?;
        let wbits = pack(w, 1, ZeroPolicy::Ceil)?;
        binary_conv2d(&xbits, &wbits, &wb.alpha, stride, padding)?
    } else if weights == WeightMode::Binary {
        // Convolve with raw signs and scale afterwards, as the packed kernel
        // does, so integer-valued sums stay exact.
        let mut out = conv2d_real(&xb, &w.map(sign), None, stride, padding, features.pad_value())?;
        let plane = out.len() / (out.shape()[0] * wb.alpha.len());
        for (i, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
            let a = wb.alpha[i % wb.alpha.len()];
            chunk.iter_mut().for_each(|v| *v = a * *v);
        }
        out
    } else {
        conv2d_real(&xb, &wb.effective, None, stride, padding, features.pad_value())?
    };
    Ok((out, BinaryConvCache { features: xb, weights: wb }))
}

pub fn conv2d_binary_backward<T: Real>(
    x: &DenseTensor<T>,
    w: &DenseTensor<T>,
    cache: BinaryConvCache<T>,
    features: FeatureMode,
    weights: WeightMode,
    dout: &DenseTensor<T>,
    stride: usize,
    padding: usize,
) -> Result<(DenseTensor<T>, DenseTensor<T>)> {
    if cache.features.shape() != x.shape() {
        return Err(Error::shape("cache does not belong to this input"));
    }
    let g = conv2d_real_backward(&cache.features, &cache.weights.effective, false, dout, stride, padding, features.pad_value())?;
    let dx = features.backward(x, g.dx)?;
    let dw = weight_backward(w, &cache.weights.alpha, weights, g.dw)?;
    Ok((dx, dw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binarize::ApproxKind;

    #[test]
    fn smooth_and_hard_agree_far_from_zero() {
        let x = DenseTensor::from_fn(&[2, 3, 5, 5], |i| 1.0 + (i % 7) as f64);
        let w = DenseTensor::from_fn(&[4, 3, 3, 3], |i| ((i * 13 % 11) as f64 - 5.0) / 7.0 + 0.01);
        let spec = ApproxSpec::new(ApproxKind::Tanh, 65536.0).unwrap();
        let (smooth, _) = conv2d_binary(&x, &w, FeatureMode::Smooth(spec), WeightMode::Binary, 1, 1, false).unwrap();
        let (hard, _) = conv2d_binary(&x, &w, FeatureMode::Hard, WeightMode::Binary, 1, 1, true).unwrap();
        assert!(smooth.max_abs_diff(&hard).unwrap() < 1e-4);
    }

    #[test]
    fn doubling_weights_doubles_output() {
        let x = DenseTensor::from_fn(&[1, 2, 4, 4], |i| (i as f32 * 0.37).sin());
        let w = DenseTensor::from_fn(&[3, 2, 3, 3], |i| (i as f32 * 0.91).cos() * 0.3);
        let w2 = w.map(|v| 2.0 * v);
        let (a, _) = conv2d_binary(&x, &w, FeatureMode::Hard, WeightMode::Binary, 1, 1, true).unwrap();
        let (b, _) = conv2d_binary(&x, &w2, FeatureMode::Hard, WeightMode::Binary, 1, 1, true).unwrap();
        assert_eq!(a.map(|v| 2.0 * v), b);
    }

    #[test]
    fn dense_and_bit_paths_agree() {
        let x = DenseTensor::from_fn(&[2, 5, 6, 6], |i| ((i * 7919) % 23) as f64 - 11.5);
        let w = DenseTensor::from_fn(&[3, 5, 3, 3], |i| ((i * 104729) % 19) as f64 - 9.5);
        for &(s, p) in &[(1, 0), (1, 1), (2, 1)] {
            let (dense, _) = conv2d_binary(&x, &w, FeatureMode::Hard, WeightMode::Binary, s, p, false).unwrap();
            let (bits, _) = conv2d_binary(&x, &w, FeatureMode::Hard, WeightMode::Binary, s, p, true).unwrap();
            assert!(dense.max_abs_diff(&bits).unwrap() < 1e-9);
        }
    }
}
