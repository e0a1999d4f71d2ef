use crate::error::{Error, Result};
use crate::layers::{LayerParams, ParamKind};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    RmsProp,
    Adam,
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptimizerKind::RmsProp => "rmsprop",
            OptimizerKind::Adam => "adam",
        })
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rmsprop" => Ok(OptimizerKind::RmsProp),
            "adam" => Ok(OptimizerKind::Adam),
            _ => Err(Error::Config(format!("unknown optimizer '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimHyper {
    /// RMSProp smoothing constant.
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimHyper {
    fn default() -> Self {
        OptimHyper { alpha: 0.99, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment buffers, shaped like the trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState<T> {
    pub kind: OptimizerKind,
    pub step: u64,
    /// RMSProp square average, or Adam first moment.
    pub m: Vec<LayerParams<T>>,
    /// Adam second moment; unused by RMSProp.
    pub v: Vec<LayerParams<T>>,
}

impl<T: Real> OptimState<T> {
    pub fn new(kind: OptimizerKind, params: &[LayerParams<T>]) -> Self {
        let zeros: Vec<_> = params.iter().map(LayerParams::zeros_like_trainable).collect();
        let v = match kind {
            OptimizerKind::Adam => zeros.clone(),
            OptimizerKind::RmsProp => vec![LayerParams::default(); params.len()],
        };
        OptimState { kind, step: 0, m: zeros, v }
    }
}

fn all_finite<T: Real>(grads: &[LayerParams<T>]) -> bool {
    grads.iter().all(|g| g.iter().all(|(_, t)| t.data().iter().all(|v| v.is_finite())))
}

/// One optimizer update. `clamp[i]` marks layers whose weights are kept in
/// [−1, 1] (binary layers). Returns `false` when the step was skipped
/// because a gradient was not finite.
pub fn optimizer_step<T: Real>(
    params: &mut [LayerParams<T>],
    grads: &[LayerParams<T>],
    state: &mut OptimState<T>,
    lr: f64,
    hyper: &OptimHyper,
    clamp: &[bool],
) -> Result<bool> {
    if grads.len() != params.len() || clamp.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::shape("optimizer inputs do not cover the same layers"));
    }
    if !all_finite(grads) {
        log::warn!("non-finite gradient at step {}; update skipped", state.step);
        return Ok(false);
    }
    state.step += 1;
    let t = state.step as i32;
    let lr = T::of(lr);
    let eps = T::of(hyper.eps);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        for kind in ParamKind::ALL.into_iter().filter(|k| k.trainable()) {
            let (Some(gt), Some(pt)) = (g.slot(kind), p.slot_mut(kind).as_mut()) else { continue };
            pt.expect_same_shape(gt)?;
            let m = state.m[i].slot_mut(kind).as_mut().ok_or_else(|| Error::shape("missing moment buffer"))?;
            match state.kind {
                OptimizerKind::RmsProp => {
                    let a = T::of(hyper.alpha);
                    for ((w, &dg), sq) in pt.data_mut().iter_mut().zip(gt.data()).zip(m.data_mut()) {
                        *sq = a * *sq + (T::one() - a) * dg * dg;
                        *w -= lr * dg / (sq.sqrt() + eps);
                    }
                }
                OptimizerKind::Adam => {
                    let v = state.v[i].slot_mut(kind).as_mut().ok_or_else(|| Error::shape("missing moment buffer"))?;
                    let (b1, b2) = (T::of(hyper.beta1), T::of(hyper.beta2));
                    let c1 = T::one() - b1.powi(t);
                    let c2 = T::one() - b2.powi(t);
                    for (((w, &dg), m1), m2) in pt.data_mut().iter_mut().zip(gt.data()).zip(m.data_mut()).zip(v.data_mut()) {
                        *m1 = b1 * *m1 + (T::one() - b1) * dg;
                        *m2 = b2 * *m2 + (T::one() - b2) * dg * dg;
                        *w -= lr * (*m1 / c1) / ((*m2 / c2).sqrt() + eps);
                    }
                }
            }
            if kind == ParamKind::Weights && clamp[i] {
                pt.data_mut().iter_mut().for_each(|w| *w = w.max(-T::one()).min(T::one()));
            }
        }
    }
    Ok(true)
}

pub fn rmsprop_step<T: Real>(
    params: &mut [LayerParams<T>],
    grads: &[LayerParams<T>],
    state: &mut OptimState<T>,
    lr: f64,
    hyper: &OptimHyper,
    clamp: &[bool],
) -> Result<bool> {
    if state.kind != OptimizerKind::RmsProp {
        return Err(Error::invalid("state belongs to a different optimizer"));
    }
    optimizer_step(params, grads, state, lr, hyper, clamp)
}

pub fn adam_step<T: Real>(
    params: &mut [LayerParams<T>],
    grads: &[LayerParams<T>],
    state: &mut OptimState<T>,
    lr: f64,
    hyper: &OptimHyper,
    clamp: &[bool],
) -> Result<bool> {
    if state.kind != OptimizerKind::Adam {
        return Err(Error::invalid("state belongs to a different optimizer"));
    }
    optimizer_step(params, grads, state, lr, hyper, clamp)
}
