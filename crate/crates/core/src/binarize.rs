//! Sign binarization, its smooth surrogates and the sharpness schedule.
//!
//! Three surrogates approximate `sign(x)` with a sharpness `λ`:
//!
//! | kind     | forward                 | derivative              |
//! |----------|-------------------------|-------------------------|
//! | sigmoid  | `2·e^{λx}/(1+e^{λx}) − 1` | `2λe^{λx}/(e^{λx}+1)²` |
//! | softsign | `λx/(1+λ|x|)`           | `λ/(1+λ|x|)²`           |
//! | tanh     | `tanh(λx)`              | `λ(1 − tanh²(λx))`      |
//!
//! All three tend to `sign` as `λ → ∞`. Training raises `λ` along a
//! geometric [`LambdaSchedule`]; deployment switches to [`ApproxKind::Hard`].

use std::fmt;
use std::str::FromStr;

use crate::bitcore::{sign, DenseTensor};
use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApproxKind {
    Sigmoid,
    Softsign,
    Tanh,
    Hard,
}

impl fmt::Display for ApproxKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ApproxKind::Sigmoid => "sigmoid",
            ApproxKind::Softsign => "softsign",
            ApproxKind::Tanh => "tanh",
            ApproxKind::Hard => "hard",
        })
    }
}

impl FromStr for ApproxKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(ApproxKind::Sigmoid),
            "softsign" => Ok(ApproxKind::Softsign),
            "tanh" => Ok(ApproxKind::Tanh),
            "hard" => Ok(ApproxKind::Hard),
            _ => Err(Error::invalid(format!("unknown approximator '{s}'"))),
        }
    }
}

/// Which surrogate to apply and how sharp it is.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxSpec {
    kind: ApproxKind,
    lambda: f64,
}

impl ApproxSpec {
    pub fn new(kind: ApproxKind, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be positive and finite, got {lambda}")));
        }
        Ok(ApproxSpec { kind, lambda })
    }

    pub fn hard() -> Self {
        ApproxSpec { kind: ApproxKind::Hard, lambda: 1.0 }
    }

    pub fn kind(&self) -> ApproxKind {
        self.kind
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn is_smooth(&self) -> bool {
        self.kind != ApproxKind::Hard
    }

    /// Surrogate value at one point.
    #[inline]
    pub fn value<T: Real>(&self, x: T) -> T {
        let l = T::of(self.lambda);
        match self.kind {
            // 2σ(z) − 1 == tanh(z/2); the tanh form cannot overflow.
            ApproxKind::Sigmoid => (l * x * T::of(0.5)).tanh(),
            ApproxKind::Softsign => l * x / (T::one() + l * x.abs()),
            ApproxKind::Tanh => (l * x).tanh(),
            ApproxKind::Hard => sign(x),
        }
    }

    /// Analytic derivative at one point; zero for the hard kind.
    #[inline]
    pub fn derivative<T: Real>(&self, x: T) -> T {
        let l = T::of(self.lambda);
        match self.kind {
            ApproxKind::Sigmoid => T::of(0.5) * l * sech2(l * x * T::of(0.5)),
            ApproxKind::Softsign => {
                let d = T::one() + l * x.abs();
                l / (d * d)
            }
            ApproxKind::Tanh => l * sech2(l * x),
            ApproxKind::Hard => T::zero(),
        }
    }
}

/// `1 − tanh²(u)` evaluated as `4e^{−2|u|}/(1+e^{−2|u|})²`, which keeps full
/// relative precision in the tails instead of cancelling to zero.
#[inline]
fn sech2<T: Real>(u: T) -> T {
    let e = (T::of(-2.0) * u.abs()).exp();
    let d = T::one() + e;
    T::of(4.0) * e / (d * d)
}

pub fn approx_forward<T: Real>(x: &DenseTensor<T>, spec: &ApproxSpec) -> Result<DenseTensor<T>> {
    x.ensure_finite()?;
    Ok(x.map(|v| spec.value(v)))
}

pub fn approx_backward<T: Real>(x: &DenseTensor<T>, spec: &ApproxSpec) -> Result<DenseTensor<T>> {
    if !spec.is_smooth() {
        return Err(Error::invalid("hard sign has no analytic derivative; use ste_backward"));
    }
    x.ensure_finite()?;
    Ok(x.map(|v| spec.derivative(v)))
}

/// Straight-through rule: pass `upstream` where `|x| <= clip`, zero elsewhere.
pub fn ste_backward<T: Real>(x: &DenseTensor<T>, upstream: &DenseTensor<T>, clip: T) -> Result<DenseTensor<T>> {
    x.zip_map(upstream, |v, g| if v.abs() <= clip { g } else { T::zero() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleGranularity {
    PerFilter,
    PerTensor,
}

/// Scales are clamped up to this value when a filter is all zeros.
pub const MIN_SCALE: f64 = 1e-8;

/// Mean absolute weight per filter (leading axis) or over the whole tensor.
pub fn weight_scale<T: Real>(w: &DenseTensor<T>, granularity: ScaleGranularity) -> Result<Vec<T>> {
    if w.is_empty() || w.shape().is_empty() {
        return Err(Error::invalid("weight tensor is empty"));
    }
    let groups = match granularity {
        ScaleGranularity::PerFilter => w.shape()[0],
        ScaleGranularity::PerTensor => 1,
    };
    let per = w.len() / groups;
    let scales = w
        .data()
        .chunks(per)
        .enumerate()
        .map(|(g, chunk)| {
            let mean = chunk.iter().map(|v| v.abs()).sum::<T>() / T::of(per as f64);
            if mean.f64() < MIN_SCALE {
                log::warn!("weight group {g} is all zeros; scale clamped to {MIN_SCALE}");
                T::of(MIN_SCALE)
            } else {
                mean
            }
        })
        .collect();
    Ok(scales)
}

/// Geometric sharpness schedule, constant within each stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaSchedule {
    start: f64,
    end: f64,
    num_stages: usize,
    stage_length: usize,
}

impl LambdaSchedule {
    pub fn new(start: f64, end: f64, num_stages: usize, stage_length: usize) -> Result<Self> {
        if !(start > 0.0) || !(end >= start) || !end.is_finite() {
            return Err(Error::invalid(format!("need 0 < start <= end, got {start}..{end}")));
        }
        if num_stages == 0 || stage_length == 0 {
            return Err(Error::invalid("schedule needs at least one stage of positive length"));
        }
        Ok(LambdaSchedule { start, end, num_stages, stage_length })
    }

    /// Doubling from 2⁰ to 2¹⁶ in 17 stages spread over `total_steps`.
    pub fn doubling(total_steps: usize) -> Self {
        Self::spanning(1.0, 65536.0, 17, total_steps)
    }

    /// Stages sized so the last one begins within `total_steps` (given at
    /// least one step per stage); the last stage absorbs the remainder.
    pub fn spanning(start: f64, end: f64, num_stages: usize, total_steps: usize) -> Self {
        let stage_length = (total_steps / num_stages.max(1)).max(1);
        LambdaSchedule { start, end, num_stages: num_stages.max(1), stage_length }
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn num_stages(&self) -> usize {
        self.num_stages
    }

    pub fn stage_length(&self) -> usize {
        self.stage_length
    }

    pub fn stage_at(&self, step: usize) -> usize {
        (step / self.stage_length).min(self.num_stages - 1)
    }

    /// λ of stage `k`.
    pub fn stage_value(&self, k: usize) -> f64 {
        let k = k.min(self.num_stages - 1);
        if k == self.num_stages - 1 {
            return self.end;
        }
        let ratio = (self.end / self.start).powf(1.0 / (self.num_stages - 1) as f64);
        // exact for integer powers of two
        self.start * ratio.powi(k as i32)
    }

    pub fn stage_values(&self) -> Vec<f64> {
        (0..self.num_stages).map(|k| self.stage_value(k)).collect()
    }
}

pub fn lambda_at(schedule: &LambdaSchedule, step: usize) -> f64 {
    schedule.stage_value(schedule.stage_at(step))
}
