use crate::bitcore::{conv_out_dim, DenseTensor};
use crate::error::{Error, Result};
use crate::real::Real;

/// Max pooling; also returns the flat input index each output was taken from.
pub fn maxpool2d<T: Real>(x: &DenseTensor<T>, kernel: usize, stride: usize, padding: usize) -> Result<(DenseTensor<T>, Vec<usize>)> {
    let (n, c, h, w) = x.dims4()?;
    if kernel == 0 || padding >= kernel {
        return Err(Error::invalid("maxpool needs kernel > padding"));
    }
    let ho = conv_out_dim(h, kernel, stride, padding)?;
    let wo = conv_out_dim(w, kernel, stride, padding)?;
    let xd = x.data();
    let mut out = Vec::with_capacity(n * c * ho * wo);
    let mut idx = Vec::with_capacity(n * c * ho * wo);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oi in 0..ho {
            for oj in 0..wo {
                let mut best = None::<(T, usize)>;
                for ki in 0..kernel {
                    for kj in 0..kernel {
                        let ii = (oi * stride + ki) as isize - padding as isize;
                        let jj = (oj * stride + kj) as isize - padding as isize;
                        if ii < 0 || jj < 0 || ii >= h as isize || jj >= w as isize {
                            continue;
                        }
                        let at = base + ii as usize * w + jj as usize;
                        if best.is_none_or(|(v, _)| xd[at] > v) {
                            best = Some((xd[at], at));
                        }
                    }
                }
                let (v, at) = best.ok_or_else(|| Error::shape("pooling window outside input"))?;
                out.push(v);
                idx.push(at);
            }
        }
    }
    Ok((DenseTensor::new(vec![n, c, ho, wo], out)?, idx))
}

pub fn maxpool2d_backward<T: Real>(dout: &DenseTensor<T>, indices: &[usize], input_shape: &[usize]) -> Result<DenseTensor<T>> {
    if indices.len() != dout.len() {
        return Err(Error::shape("pool indices do not match upstream gradient"));
    }
    let mut dx = DenseTensor::zeros(input_shape);
    for (&i, &g) in indices.iter().zip(dout.data()) {
        dx.data_mut()[i] += g;
    }
    Ok(dx)
}

pub fn upsample_nearest<T: Real>(x: &DenseTensor<T>, factor: usize) -> Result<DenseTensor<T>> {
    let (n, c, h, w) = x.dims4()?;
    if factor == 0 {
        return Err(Error::invalid("upsample factor must be positive"));
    }
    let (ho, wo) = (h * factor, w * factor);
    let xd = x.data();
    let mut out = Vec::with_capacity(n * c * ho * wo);
    for plane in 0..n * c {
        for oi in 0..ho {
            let row = &xd[(plane * h + oi / factor) * w..][..w];
            for oj in 0..wo {
                out.push(row[oj / factor]);
            }
        }
    }
    DenseTensor::new(vec![n, c, ho, wo], out)
}

pub fn upsample_nearest_backward<T: Real>(dout: &DenseTensor<T>, factor: usize) -> Result<DenseTensor<T>> {
    let (n, c, ho, wo) = dout.dims4()?;
    if factor == 0 || ho % factor != 0 || wo % factor != 0 {
        return Err(Error::shape("upstream gradient not divisible by upsample factor"));
    }
    let (h, w) = (ho / factor, wo / factor);
    let mut dx = vec![T::zero(); n * c * h * w];
    for plane in 0..n * c {
        for oi in 0..ho {
            for oj in 0..wo {
                dx[(plane * h + oi / factor) * w + oj / factor] += dout.data()[(plane * ho + oi) * wo + oj];
            }
        }
    }
    DenseTensor::new(vec![n, c, h, w], dx)
}

/// `[N, C, H, W]` → `[N, C]` spatial mean.
pub fn global_avg_pool<T: Real>(x: &DenseTensor<T>) -> Result<DenseTensor<T>> {
    let (n, c, h, w) = x.dims4()?;
    let area = T::of((h * w) as f64);
    let data = x.data().chunks(h * w).map(|p| p.iter().copied().sum::<T>() / area).collect();
    DenseTensor::new(vec![n, c], data)
}

pub fn global_avg_pool_backward<T: Real>(dout: &DenseTensor<T>, input_shape: &[usize]) -> Result<DenseTensor<T>> {
    let area: usize = input_shape[2..].iter().product();
    let scale = T::one() / T::of(area as f64);
    let mut dx = Vec::with_capacity(dout.len() * area);
    for &g in dout.data() {
        dx.extend(std::iter::repeat_n(g * scale, area));
    }
    DenseTensor::new(input_shape.to_vec(), dx)
}
