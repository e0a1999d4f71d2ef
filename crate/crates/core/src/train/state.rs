use crate::binarize::{ApproxKind, ApproxSpec};
use crate::error::{Error, Result};
use crate::layers::{FeatureMode, WeightMode};
use crate::net::{ExecMode, Network};

use super::optim::{OptimState, OptimizerKind};

/// Training phases, in the only order they may occur.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    Real,
    BinFeatures,
    BinFull,
}

impl Phase {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: u8) -> Option<Self> {
        [Phase::Real, Phase::BinFeatures, Phase::BinFull].get(c as usize).copied()
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Real => "REAL",
            Phase::BinFeatures => "BIN_FEATURES",
            Phase::BinFull => "BIN_FULL",
        })
    }
}

/// Everything a run needs to resume.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub net: Network<f32>,
    pub optim: OptimState<f32>,
    /// Completed epochs.
    pub epoch: usize,
    /// Optimizer iterations attempted.
    pub step: u64,
    pub phase: Phase,
    /// Feature surrogate used while only features are binary; `Hard` means
    /// abrupt binarization.
    pub approx: ApproxKind,
    /// Current feature sharpness.
    pub lambda: f64,
    pub rng_seed: u64,
}

impl TrainState {
    pub fn new(net: Network<f32>, optimizer: OptimizerKind, approx: ApproxKind, lambda: f64, rng_seed: u64) -> Self {
        let optim = OptimState::new(optimizer, net.params());
        TrainState { net, optim, epoch: 0, step: 0, phase: Phase::Real, approx, lambda, rng_seed }
    }

    pub fn set_phase(&mut self, next: Phase) -> Result<()> {
        if next < self.phase {
            return Err(Error::Train(format!("phase cannot go back from {} to {next}", self.phase)));
        }
        self.phase = next;
        Ok(())
    }

    /// How binary layers run in the current phase.
    pub fn exec_mode(&self, training: bool) -> Result<ExecMode> {
        Ok(match self.phase {
            Phase::Real => ExecMode::real(training),
            Phase::BinFeatures => {
                let features = if self.approx == ApproxKind::Hard {
                    FeatureMode::Hard
                } else {
                    FeatureMode::Smooth(ApproxSpec::new(self.approx, self.lambda)?)
                };
                ExecMode { features, weights: WeightMode::Real, training, bit_kernels: false, feature_margin: 0.0 }
            }
            Phase::BinFull => ExecMode::binary(training),
        })
    }

    /// Evaluation mode: like `exec_mode(false)`, except that smooth features
    /// turn hard once λ reaches `hard_threshold`.
    pub fn inference_mode(&self, hard_threshold: f64) -> Result<ExecMode> {
        let mode = self.exec_mode(false)?;
        Ok(match mode.features {
            FeatureMode::Smooth(spec) if spec.lambda() >= hard_threshold => ExecMode { features: FeatureMode::Hard, ..mode },
            _ => mode,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_pose_model, HourglassSpec};

    #[test]
    fn phases_only_advance() {
        let net = Network::init(build_pose_model(&HourglassSpec::new(1, 8, 2, 4), 1, 1, true).unwrap(), 0);
        let mut s = TrainState::new(net, OptimizerKind::RmsProp, ApproxKind::Tanh, 1.0, 0);
        s.set_phase(Phase::BinFeatures).unwrap();
        assert!(matches!(s.exec_mode(true).unwrap().features, FeatureMode::Smooth(_)));
        s.set_phase(Phase::BinFull).unwrap();
        assert!(s.set_phase(Phase::Real).is_err());
        assert_eq!(s.exec_mode(false).unwrap().weights, WeightMode::Binary);
        for p in [Phase::Real, Phase::BinFeatures, Phase::BinFull] {
            assert_eq!(Phase::from_code(p.code()), Some(p));
        }
    }

    #[test]
    fn inference_turns_hard_at_threshold() {
        let net = Network::init(build_pose_model(&HourglassSpec::new(1, 8, 2, 4), 1, 1, true).unwrap(), 0);
        let mut s = TrainState::new(net, OptimizerKind::RmsProp, ApproxKind::Tanh, 1024.0, 0);
        s.set_phase(Phase::BinFeatures).unwrap();
        assert!(matches!(s.inference_mode(2048.0).unwrap().features, FeatureMode::Smooth(_)));
        assert_eq!(s.inference_mode(1024.0).unwrap().features, FeatureMode::Hard);
        assert_eq!(s.inference_mode(1024.0).unwrap().weights, WeightMode::Real);
    }
}
