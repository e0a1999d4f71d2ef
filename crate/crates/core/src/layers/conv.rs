use crate::bitcore::{conv_out_dim, DenseTensor};
use crate::error::{Error, Result};
use crate::real::Real;

pub struct ConvGrads<T> {
    pub dx: DenseTensor<T>,
    pub dw: DenseTensor<T>,
    pub dbias: Option<DenseTensor<T>>,
}

struct Geometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    f: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
    stride: usize,
    padding: usize,
}

impl Geometry {
    fn new<T: Real>(x: &DenseTensor<T>, weights: &DenseTensor<T>, stride: usize, padding: usize) -> Result<Self> {
        let (n, c, h, w) = x.dims4()?;
        let (f, wc, kh, kw) = weights.dims4()?;
        if c != wc {
            return Err(Error::shape(format!("input has {c} channels, weights expect {wc}")));
        }
        let ho = conv_out_dim(h, kh, stride, padding)?;
        let wo = conv_out_dim(w, kw, stride, padding)?;
        Ok(Geometry { n, c, h, w, f, kh, kw, ho, wo, stride, padding })
    }

    fn patch(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn pixels(&self) -> usize {
        self.ho * self.wo
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.padding == 0
    }

    /// Unfolds sample `b` into a `[C·kh·kw, Ho·Wo]` matrix.
    fn im2col<T: Real>(&self, x: &[T], b: usize, pad_value: T, cols: &mut [T]) {
        let npix = self.pixels();
        let xs = &x[b * self.c * self.h * self.w..][..self.c * self.h * self.w];
        for c in 0..self.c {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = &mut cols[((c * self.kh + ki) * self.kw + kj) * npix..][..npix];
                    for oi in 0..self.ho {
                        let ii = (oi * self.stride + ki) as isize - self.padding as isize;
                        let dst = &mut row[oi * self.wo..][..self.wo];
                        if ii < 0 || ii >= self.h as isize {
                            dst.fill(pad_value);
                            continue;
                        }
                        let src = &xs[(c * self.h + ii as usize) * self.w..][..self.w];
                        for (oj, d) in dst.iter_mut().enumerate() {
                            let jj = (oj * self.stride + kj) as isize - self.padding as isize;
                            *d = if jj < 0 || jj >= self.w as isize { pad_value } else { src[jj as usize] };
                        }
                    }
                }
            }
        }
    }

    /// Folds a `[C·kh·kw, Ho·Wo]` gradient back onto sample `b` of `dx`.
    fn col2im<T: Real>(&self, cols: &[T], b: usize, dx: &mut [T]) {
        let npix = self.pixels();
        let xs = &mut dx[b * self.c * self.h * self.w..][..self.c * self.h * self.w];
        for c in 0..self.c {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = &cols[((c * self.kh + ki) * self.kw + kj) * npix..][..npix];
                    for oi in 0..self.ho {
                        let ii = (oi * self.stride + ki) as isize - self.padding as isize;
                        if ii < 0 || ii >= self.h as isize {
                            continue;
                        }
                        let dst = &mut xs[(c * self.h + ii as usize) * self.w..][..self.w];
                        for oj in 0..self.wo {
                            let jj = (oj * self.stride + kj) as isize - self.padding as isize;
                            if jj >= 0 && jj < self.w as isize {
                                dst[jj as usize] += row[oi * self.wo + oj];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Real-valued cross-correlation of `[N, C, H, W]` input with `[F, C, kh, kw]`
/// weights; `pad_value` fills the spatial border.
pub fn conv2d_real<T: Real>(
    x: &DenseTensor<T>,
    weights: &DenseTensor<T>,
    bias: Option<&DenseTensor<T>>,
    stride: usize,
    padding: usize,
    pad_value: T,
) -> Result<DenseTensor<T>> {
    let g = Geometry::new(x, weights, stride, padding)?;
    if let Some(b) = bias {
        if b.len() != g.f {
            return Err(Error::shape(format!("bias of {} for {} filters", b.len(), g.f)));
        }
    }
    let (patch, npix) = (g.patch(), g.pixels());
    let mut out = vec![T::zero(); g.n * g.f * npix];
    let mut cols = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); patch * npix] };
    for b in 0..g.n {
        let rhs: &[T] = if g.is_pointwise() {
            &x.data()[b * patch * npix..][..patch * npix]
        } else {
            g.im2col(x.data(), b, pad_value, &mut cols);
            &cols
        };
        let dst = &mut out[b * g.f * npix..][..g.f * npix];
        if let Some(bias) = bias {
            for (fi, row) in dst.chunks_mut(npix).enumerate() {
                row.fill(bias.data()[fi]);
            }
        }
        let beta = if bias.is_some() { T::one() } else { T::zero() };
        T::gemm(g.f, patch, npix, T::one(), weights.data(), patch as isize, 1, rhs, npix as isize, 1, beta, dst, npix as isize, 1);
    }
    DenseTensor::new(vec![g.n, g.f, g.ho, g.wo], out)
}

pub fn conv2d_real_backward<T: Real>(
    x: &DenseTensor<T>,
    weights: &DenseTensor<T>,
    has_bias: bool,
    dout: &DenseTensor<T>,
    stride: usize,
    padding: usize,
    pad_value: T,
) -> Result<ConvGrads<T>> {
    let g = Geometry::new(x, weights, stride, padding)?;
    if dout.shape() != [g.n, g.f, g.ho, g.wo] {
        return Err(Error::shape(format!("upstream {:?} does not match output", dout.shape())));
    }
    let (patch, npix) = (g.patch(), g.pixels());
    let mut dx = vec![T::zero(); x.len()];
    let mut dw = vec![T::zero(); weights.len()];
    let mut cols = vec![T::zero(); patch * npix];
    let mut dcols = vec![T::zero(); patch * npix];
    for b in 0..g.n {
        let dy = &dout.data()[b * g.f * npix..][..g.f * npix];
        let lhs: &[T] = if g.is_pointwise() {
            &x.data()[b * patch * npix..][..patch * npix]
        } else {
            g.im2col(x.data(), b, pad_value, &mut cols);
            &cols
        };
        // dW += dY · colsᵀ
        T::gemm(g.f, npix, patch, T::one(), dy, npix as isize, 1, lhs, 1, npix as isize, T::one(), &mut dw, patch as isize, 1);
        // dcols = Wᵀ · dY
        if g.is_pointwise() {
            let dst = &mut dx[b * patch * npix..][..patch * npix];
            T::gemm(patch, g.f, npix, T::one(), weights.data(), 1, patch as isize, dy, npix as isize, 1, T::zero(), dst, npix as isize, 1);
        } else {
            T::gemm(patch, g.f, npix, T::one(), weights.data(), 1, patch as isize, dy, npix as isize, 1, T::zero(), &mut dcols, npix as isize, 1);
            g.col2im(&dcols, b, &mut dx);
        }
    }
    let dbias = has_bias.then(|| {
        let mut db = vec![T::zero(); g.f];
        for b in 0..g.n {
            for (fi, d) in db.iter_mut().enumerate() {
                *d += dout.data()[(b * g.f + fi) * npix..][..npix].iter().copied().sum::<T>();
            }
        }
        DenseTensor::new(vec![g.f], db).expect("bias length")
    });
    Ok(ConvGrads {
        dx: DenseTensor::new(x.shape().to_vec(), dx)?,
        dw: DenseTensor::new(weights.shape().to_vec(), dw)?,
        dbias,
    })
}
