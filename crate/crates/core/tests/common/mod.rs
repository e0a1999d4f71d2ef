#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xnorpose::bitcore::DenseTensor;

pub const FD_STEP: f64 = 1e-6;
/// Gradients smaller than this are compared in absolute terms.
pub const GRAD_FLOOR: f64 = 1e-3;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> DenseTensor<f64> {
    DenseTensor::from_fn(shape, |_| rng.random_range(-scale..scale))
}

/// Central difference of `f` at coordinate `i` of `x`.
pub fn central_diff(x: &mut DenseTensor<f64>, i: usize, mut f: impl FnMut(&DenseTensor<f64>) -> f64) -> f64 {
    let orig = x.data()[i];
    x.data_mut()[i] = orig + FD_STEP;
    let up = f(x);
    x.data_mut()[i] = orig - FD_STEP;
    let down = f(x);
    x.data_mut()[i] = orig;
    (up - down) / (2.0 * FD_STEP)
}

/// `Σ r ⊙ y`, the scalar whose gradient with respect to `y` is `r`.
pub fn dot(r: &DenseTensor<f64>, y: &DenseTensor<f64>) -> f64 {
    r.data().iter().zip(y.data()).map(|(a, b)| a * b).sum()
}

/// Worst relative error found, with the coordinate it occurred at.
#[derive(Debug, Default, Clone, Copy)]
pub struct Worst {
    pub err: f64,
    pub checked: usize,
}

impl Worst {
    pub fn update(&mut self, analytic: f64, numeric: f64) {
        self.err = self.err.max(rel_err(analytic, numeric));
        self.checked += 1;
    }
}
