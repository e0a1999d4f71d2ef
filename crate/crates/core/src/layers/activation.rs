use std::fmt;
use std::str::FromStr;

use crate::bitcore::DenseTensor;
use crate::error::{Error, Result};
use crate::real::Real;

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;
pub const PRELU_INIT: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    /// Learnable negative slope, one per channel or one shared.
    Prelu,
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Relu => f.write_str("relu"),
            Activation::LeakyRelu(a) => write!(f, "leaky:{a}"),
            Activation::Prelu => f.write_str("prelu"),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "prelu" => Ok(Activation::Prelu),
            "leaky" | "leaky_relu" => Ok(Activation::LeakyRelu(DEFAULT_LEAKY_SLOPE)),
            _ => match s.strip_prefix("leaky:") {
                Some(a) => a
                    .parse()
                    .map(Activation::LeakyRelu)
                    .map_err(|_| Error::invalid(format!("bad leaky slope in '{s}'"))),
                None => Err(Error::invalid(format!("unknown activation '{s}'"))),
            },
        }
    }
}

fn slope_for<T: Real>(kind: Activation, slope: Option<&[T]>, ch: usize) -> Result<T> {
    match kind {
        Activation::Relu => Ok(T::zero()),
        Activation::LeakyRelu(a) => Ok(T::of(a)),
        Activation::Prelu => {
            let s = slope.ok_or_else(|| Error::invalid("prelu needs slope parameters"))?;
            Ok(if s.len() == 1 { s[0] } else { s[ch] })
        }
    }
}

fn check_slope<T: Real>(kind: Activation, slope: Option<&[T]>, c: usize) -> Result<()> {
    if let (Activation::Prelu, Some(s)) = (kind, slope) {
        if s.len() != 1 && s.len() != c {
            return Err(Error::shape(format!("{} prelu slopes for {c} channels", s.len())));
        }
    }
    Ok(())
}

pub fn activation<T: Real>(x: &DenseTensor<T>, kind: Activation, slope: Option<&[T]>) -> Result<DenseTensor<T>> {
    let (n, c, inner) = x.channel_dims()?;
    check_slope(kind, slope, c)?;
    let mut out = x.clone();
    for b in 0..n {
        for ch in 0..c {
            let a = slope_for(kind, slope, ch)?;
            for v in &mut out.data_mut()[(b * c + ch) * inner..][..inner] {
                if *v < T::zero() {
                    *v *= a;
                }
            }
        }
    }
    Ok(out)
}

/// Returns the input gradient and, for PReLU, the slope gradient
/// `Σ_{x<0} x·upstream` (per channel, or summed when the slope is shared).
pub fn activation_backward<T: Real>(
    x: &DenseTensor<T>,
    kind: Activation,
    slope: Option<&[T]>,
    dout: &DenseTensor<T>,
) -> Result<(DenseTensor<T>, Option<Vec<T>>)> {
    x.expect_same_shape(dout)?;
    let (n, c, inner) = x.channel_dims()?;
    check_slope(kind, slope, c)?;
    let mut dx = dout.clone();
    let mut dslope = match (kind, slope) {
        (Activation::Prelu, Some(s)) => Some(vec![T::zero(); s.len()]),
        _ => None,
    };
    for b in 0..n {
        for ch in 0..c {
            let a = slope_for(kind, slope, ch)?;
            let base = (b * c + ch) * inner;
            let xs = &x.data()[base..base + inner];
            let gs = &mut dx.data_mut()[base..base + inner];
            let mut acc = T::zero();
            for (g, &v) in gs.iter_mut().zip(xs) {
                if v < T::zero() {
                    acc += v * *g;
                    *g *= a;
                }
            }
            if let Some(ds) = dslope.as_mut() {
                let k = if ds.len() == 1 { 0 } else { ch };
                ds[k] += acc;
            }
        }
    }
    Ok((dx, dslope))
}

pub fn sigmoid<T: Real>(x: &DenseTensor<T>) -> DenseTensor<T> {
    x.map(|v| T::one() / (T::one() + (-v).exp()))
}

pub fn sigmoid_backward<T: Real>(y: &DenseTensor<T>, dout: &DenseTensor<T>) -> Result<DenseTensor<T>> {
    y.zip_map(dout, |v, g| g * v * (T::one() - v))
}
