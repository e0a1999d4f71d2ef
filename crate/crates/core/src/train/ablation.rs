//! Multi-seed comparisons of training variants on the pose task.

use std::fmt;

use crate::binarize::ApproxKind;
use crate::error::Result;
use crate::layers::Activation;
use crate::models::{build_pose_model, HourglassSpec};
use crate::net::Network;

use super::pipeline::{train, EpochSummary, InitOrder, MetricRecord, TaskData, Teacher, TrainConfig};
use super::state::{Phase, TrainState};

/// A pose network plus the recipe that trains it.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseExperiment {
    pub hourglass: HourglassSpec,
    pub image_channels: usize,
    pub stacks: usize,
    pub binarize_joins: bool,
    pub train: TrainConfig,
}

impl PoseExperiment {
    pub fn init_state(&self) -> Result<TrainState> {
        let graph = build_pose_model(&self.hourglass, self.image_channels, self.stacks, self.binarize_joins)?;
        let net = Network::init(graph, self.train.seed);
        let q = &self.train.quant;
        Ok(TrainState::new(net, self.train.optimizer, q.kind, q.lambda_start, self.train.seed))
    }

    pub fn run(
        &self,
        data: &TaskData,
        teacher: Option<Teacher<'_>>,
        sink: &mut dyn FnMut(&MetricRecord),
    ) -> Result<(TrainState, Vec<EpochSummary>)> {
        let mut state = self.init_state()?;
        let log = train(&mut state, &self.train, data, teacher, sink)?;
        Ok((state, log))
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut e = self.clone();
        e.train.seed = seed;
        e
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// PReLU, reverse-order init, smooth progressive features, one stack.
    Baseline,
    Relu,
    StandardInit,
    Abrupt,
    TwoStack,
    /// Real-valued twin of the baseline.
    RealTeacher,
    /// Baseline trained against the real teacher's heatmaps.
    Distilled,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Baseline,
        Variant::Relu,
        Variant::StandardInit,
        Variant::Abrupt,
        Variant::TwoStack,
        Variant::RealTeacher,
        Variant::Distilled,
    ];

    pub fn apply(self, base: &PoseExperiment) -> PoseExperiment {
        let mut e = base.clone();
        match self {
            Variant::Baseline | Variant::Distilled => {}
            Variant::Relu => e.hourglass.act.kind = Activation::Relu,
            Variant::StandardInit => e.train.init = InitOrder::Standard,
            Variant::Abrupt => e.train.quant.kind = ApproxKind::Hard,
            Variant::TwoStack => e.stacks = 2,
            Variant::RealTeacher => e.train.init = InitOrder::RealOnly,
        }
        e
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Baseline => "baseline",
            Variant::Relu => "relu",
            Variant::StandardInit => "standard_init",
            Variant::Abrupt => "abrupt",
            Variant::TwoStack => "two_stack",
            Variant::RealTeacher => "real_teacher",
            Variant::Distilled => "distilled",
        })
    }
}

#[derive(Debug, Clone)]
pub struct VariantResult {
    pub variant: Variant,
    /// One epoch log per seed.
    pub runs: Vec<Vec<EpochSummary>>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n.max(1) as f64
}

impl VariantResult {
    pub fn mean_final_metric(&self) -> f64 {
        mean(self.runs.iter().filter_map(|r| r.last().map(|e| e.val_metric)))
    }

    /// Mean validation metric at the `k`-th (1-based) epoch of the fully
    /// binary phase.
    pub fn mean_metric_in_bin_full(&self, k: usize) -> f64 {
        mean(self.runs.iter().filter_map(|r| {
            r.iter().filter(|e| e.phase == Phase::BinFull).nth(k.saturating_sub(1)).map(|e| e.val_metric)
        }))
    }
}

#[derive(Debug, Clone)]
pub struct AblationReport {
    pub results: Vec<VariantResult>,
}

impl AblationReport {
    pub fn get(&self, v: Variant) -> Option<&VariantResult> {
        self.results.iter().find(|r| r.variant == v)
    }
}

/// Trains every requested variant for every seed. The distilled variant
/// trains a real teacher first when one is not among the variants.
pub fn run_ablation(base: &PoseExperiment, data: &TaskData, variants: &[Variant], seeds: &[u64]) -> Result<AblationReport> {
    let mut results: Vec<VariantResult> = variants.iter().map(|&variant| VariantResult { variant, runs: Vec::new() }).collect();
    for &seed in seeds {
        let base = base.with_seed(seed);
        let mut teacher: Option<TrainState> = None;
        let mut order: Vec<usize> = (0..variants.len()).collect();
        // Teachers before students.
        order.sort_by_key(|&i| variants[i] == Variant::Distilled);
        for i in order {
            let v = variants[i];
            let exp = v.apply(&base);
            let (state, log) = if v == Variant::Distilled {
                if teacher.is_none() {
                    teacher = Some(Variant::RealTeacher.apply(&base).run(data, None, &mut |_| {})?.0);
                }
                let t = teacher.as_ref().expect("teacher trained above");
                let mode = t.exec_mode(false)?;
                exp.run(data, Some(Teacher { net: &t.net, mode }), &mut |_| {})?
            } else {
                exp.run(data, None, &mut |_| {})?
            };
            log::info!("seed {seed} {v}: final {:.2}", log.last().map_or(f64::NAN, |e| e.val_metric));
            if v == Variant::RealTeacher {
                teacher = Some(state);
            }
            results[i].runs.push(log);
        }
    }
    Ok(AblationReport { results })
}
