//! Differentiable layers with explicit forward and backward passes.
//!
//! Binary convolutions follow the order BatchNorm → binarize → convolve →
//! non-linearity; the executor in [`crate::net`] wires them together.

mod activation;
mod binconv;
mod conv;
mod histogram;
mod linear;
mod norm;
mod pool;

pub use activation::{activation, activation_backward, sigmoid, sigmoid_backward, Activation, DEFAULT_LEAKY_SLOPE, PRELU_INIT};
pub use binconv::{
    conv2d_binary, conv2d_binary_backward, effective_weights, weight_backward, BinaryConvCache, BinaryWeights, FeatureMode,
    WeightMode, STE_CLIP,
};
pub use conv::{conv2d_real, conv2d_real_backward, ConvGrads};
pub use histogram::{weight_histogram, Histogram};
pub use linear::{linear, linear_backward, LinearGrads};
pub use norm::{batchnorm, batchnorm_backward, BatchNormCache, BatchNormGrads, BN_EPS, BN_MOMENTUM};
pub use pool::{
    global_avg_pool, global_avg_pool_backward, maxpool2d, maxpool2d_backward, upsample_nearest, upsample_nearest_backward,
};

use crate::bitcore::DenseTensor;
use crate::real::Real;

/// Which slot of [`LayerParams`] a tensor lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ParamKind {
    Weights,
    Bias,
    BnGamma,
    BnBeta,
    BnMean,
    BnVar,
    PreluSlope,
}

impl ParamKind {
    pub const ALL: [ParamKind; 7] = [
        ParamKind::Weights,
        ParamKind::Bias,
        ParamKind::BnGamma,
        ParamKind::BnBeta,
        ParamKind::BnMean,
        ParamKind::BnVar,
        ParamKind::PreluSlope,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }

    /// Running statistics are state, not trainable parameters.
    pub fn trainable(self) -> bool {
        !matches!(self, ParamKind::BnMean | ParamKind::BnVar)
    }
}

/// Tensors owned by one layer. Absent slots are `None`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayerParams<T> {
    pub weights: Option<DenseTensor<T>>,
    pub bias: Option<DenseTensor<T>>,
    pub bn_gamma: Option<DenseTensor<T>>,
    pub bn_beta: Option<DenseTensor<T>>,
    pub bn_mean: Option<DenseTensor<T>>,
    pub bn_var: Option<DenseTensor<T>>,
    pub prelu_slope: Option<DenseTensor<T>>,
}

impl<T: Real> LayerParams<T> {
    pub fn slot(&self, kind: ParamKind) -> Option<&DenseTensor<T>> {
        match kind {
            ParamKind::Weights => self.weights.as_ref(),
            ParamKind::Bias => self.bias.as_ref(),
            ParamKind::BnGamma => self.bn_gamma.as_ref(),
            ParamKind::BnBeta => self.bn_beta.as_ref(),
            ParamKind::BnMean => self.bn_mean.as_ref(),
            ParamKind::BnVar => self.bn_var.as_ref(),
            ParamKind::PreluSlope => self.prelu_slope.as_ref(),
        }
    }

    pub fn slot_mut(&mut self, kind: ParamKind) -> &mut Option<DenseTensor<T>> {
        match kind {
            ParamKind::Weights => &mut self.weights,
            ParamKind::Bias => &mut self.bias,
            ParamKind::BnGamma => &mut self.bn_gamma,
            ParamKind::BnBeta => &mut self.bn_beta,
            ParamKind::BnMean => &mut self.bn_mean,
            ParamKind::BnVar => &mut self.bn_var,
            ParamKind::PreluSlope => &mut self.prelu_slope,
        }
    }

    /// Present slots in canonical order.
    pub fn iter(&self) -> impl Iterator<Item = (ParamKind, &DenseTensor<T>)> {
        ParamKind::ALL.into_iter().filter_map(move |k| self.slot(k).map(|t| (k, t)))
    }

    /// Number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.iter().filter(|(k, _)| k.trainable()).map(|(_, t)| t.len()).sum()
    }

    /// A zero-filled copy of every trainable slot, for gradient accumulation.
    pub fn zeros_like_trainable(&self) -> Self {
        let mut out = LayerParams::default();
        for (k, t) in self.iter().filter(|(k, _)| k.trainable()) {
            *out.slot_mut(k) = Some(DenseTensor::zeros(t.shape()));
        }
        out
    }

    pub fn cast<U: Real>(&self) -> LayerParams<U> {
        let mut out = LayerParams::default();
        for (k, t) in self.iter() {
            *out.slot_mut(k) = Some(t.cast());
        }
        out
    }
}
