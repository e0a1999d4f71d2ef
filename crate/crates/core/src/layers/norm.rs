use crate::bitcore::DenseTensor;
use crate::error::{Error, Result};
use crate::real::Real;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct BatchNormCache<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
    training: bool,
}

/// Per-channel batch normalization over rank-2 `[N, C]` or rank-4 `[N, C, H, W]`
/// input. Training mode normalizes with batch statistics and folds them into
/// the running estimates; eval mode uses the running estimates.
#[allow(clippy::too_many_arguments)]
pub fn batchnorm<T: Real>(
    x: &DenseTensor<T>,
    gamma: &[T],
    beta: &[T],
    running_mean: &mut [T],
    running_var: &mut [T],
    training: bool,
    momentum: T,
    eps: T,
) -> Result<(DenseTensor<T>, BatchNormCache<T>)> {
    let (n, c, inner) = x.channel_dims()?;
    if [gamma.len(), beta.len(), running_mean.len(), running_var.len()].iter().any(|&l| l != c) {
        return Err(Error::shape(format!("batchnorm parameters do not match {c} channels")));
    }
    if !(eps > T::zero()) {
        return Err(Error::invalid("batchnorm eps must be positive"));
    }
    if training && n < 2 {
        return Err(Error::invalid("batchnorm training needs a batch of at least 2"));
    }
    let xd = x.data();
    let m = n * inner;
    let mut out = vec![T::zero(); xd.len()];
    let mut xhat = vec![T::zero(); xd.len()];
    let mut inv_std = vec![T::zero(); c];
    for ch in 0..c {
        let (mean, var) = if training {
            let mut sum = T::zero();
            for b in 0..n {
                sum += xd[(b * c + ch) * inner..][..inner].iter().copied().sum::<T>();
            }
            let mean = sum / T::of(m as f64);
            let mut sq = T::zero();
            for b in 0..n {
                for &v in &xd[(b * c + ch) * inner..][..inner] {
                    sq += (v - mean) * (v - mean);
                }
            }
            let var = sq / T::of(m as f64);
            let unbiased = sq / T::of((m - 1).max(1) as f64);
            running_mean[ch] = (T::one() - momentum) * running_mean[ch] + momentum * mean;
            running_var[ch] = (T::one() - momentum) * running_var[ch] + momentum * unbiased;
            (mean, var)
        } else {
            (running_mean[ch], running_var[ch])
        };
        let is = T::one() / (var + eps).sqrt();
        inv_std[ch] = is;
        for b in 0..n {
            let base = (b * c + ch) * inner;
            for i in base..base + inner {
                let h = (xd[i] - mean) * is;
                xhat[i] = h;
                out[i] = gamma[ch] * h + beta[ch];
            }
        }
    }
    Ok((DenseTensor::new(x.shape().to_vec(), out)?, BatchNormCache { xhat, inv_std, training }))
}

pub struct BatchNormGrads<T> {
    pub dx: DenseTensor<T>,
    pub dgamma: Vec<T>,
    pub dbeta: Vec<T>,
}

pub fn batchnorm_backward<T: Real>(dout: &DenseTensor<T>, gamma: &[T], cache: &BatchNormCache<T>) -> Result<BatchNormGrads<T>> {
    let (n, c, inner) = dout.channel_dims()?;
    if cache.xhat.len() != dout.len() || gamma.len() != c {
        return Err(Error::shape("batchnorm cache does not match upstream gradient"));
    }
    let dy = dout.data();
    let m = T::of((n * inner) as f64);
    let mut dx = vec![T::zero(); dy.len()];
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for ch in 0..c {
        let (mut sdy, mut sdyx) = (T::zero(), T::zero());
        for b in 0..n {
            let base = (b * c + ch) * inner;
            for i in base..base + inner {
                sdy += dy[i];
                sdyx += dy[i] * cache.xhat[i];
            }
        }
        dgamma[ch] = sdyx;
        dbeta[ch] = sdy;
        let k = gamma[ch] * cache.inv_std[ch];
        for b in 0..n {
            let base = (b * c + ch) * inner;
            for i in base..base + inner {
                dx[i] = if cache.training {
                    k * (dy[i] - sdy / m - cache.xhat[i] * sdyx / m)
                } else {
                    k * dy[i]
                };
            }
        }
    }
    Ok(BatchNormGrads { dx: DenseTensor::new(dout.shape().to_vec(), dx)?, dgamma, dbeta })
}
