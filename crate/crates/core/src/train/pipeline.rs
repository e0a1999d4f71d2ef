//! Epoch loop: phase plan, λ annealing, distillation and validation.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::binarize::{lambda_at, ApproxKind, LambdaSchedule};
use crate::bitcore::DenseTensor;
use crate::data::{pck, HeatmapSample, LabelledImages, PoseDataset};
use crate::error::{Error, Result};
use crate::models::NodeId;
use crate::net::{ExecMode, Network};

use super::augment::{augment, AugmentSpec};
use super::loss::{bce_heatmap_loss, distill_loss, feature_match_loss, softmax_ce_loss, Target, FEATURE_MATCH_WEIGHT};
use super::optim::{optimizer_step, OptimHyper, OptimizerKind};
use super::schedule::LrSchedule;
use super::state::{Phase, TrainState};

/// Order in which a network becomes binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitOrder {
    /// Binary features with real weights first, then everything binary.
    Reverse,
    /// Fully real first, then everything binary.
    Standard,
    /// Never binarize (teachers and real baselines).
    RealOnly,
}

impl fmt::Display for InitOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitOrder::Reverse => "reverse",
            InitOrder::Standard => "standard",
            InitOrder::RealOnly => "real",
        })
    }
}

impl std::str::FromStr for InitOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reverse" => Ok(InitOrder::Reverse),
            "standard" => Ok(InitOrder::Standard),
            "real" => Ok(InitOrder::RealOnly),
            _ => Err(Error::Config(format!("unknown init order '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantConfig {
    /// Feature surrogate during the first phase; `Hard` binarizes abruptly.
    pub kind: ApproxKind,
    pub lambda_start: f64,
    pub lambda_end: f64,
    pub stages: usize,
    /// λ at which deployment switches to packed kernels.
    pub hard_threshold: f64,
}

impl Default for QuantConfig {
    fn default() -> Self {
        QuantConfig { kind: ApproxKind::Tanh, lambda_start: 1.0, lambda_end: 65536.0, stages: 17, hard_threshold: 65536.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistillConfig {
    pub gt_weight: f64,
    pub match_features: bool,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig { gt_weight: 0.25, match_features: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Share of epochs spent before weights are binarized.
    pub phase_a_frac: f64,
    pub init: InitOrder,
    pub quant: QuantConfig,
    pub optimizer: OptimizerKind,
    pub hyper: OptimHyper,
    pub lr: LrSchedule,
    pub seed: u64,
    pub augment: Option<AugmentSpec>,
    pub eval_batch: usize,
    pub pck_threshold: f64,
    pub distill: DistillConfig,
}

impl TrainConfig {
    /// Epochs before the fully binary phase.
    pub fn phase_a_epochs(&self) -> usize {
        if self.init == InitOrder::RealOnly {
            return self.epochs;
        }
        ((self.epochs as f64 * self.phase_a_frac).round() as usize).min(self.epochs)
    }

    pub fn phase_for_epoch(&self, epoch: usize) -> Phase {
        match self.init {
            InitOrder::RealOnly => Phase::Real,
            _ if epoch >= self.phase_a_epochs() => Phase::BinFull,
            InitOrder::Reverse => Phase::BinFeatures,
            InitOrder::Standard => Phase::Real,
        }
    }
}

/// Training and validation data for one task.
#[derive(Debug, Clone)]
pub enum TaskData {
    Pose { train: PoseDataset, val: PoseDataset },
    Classify { train: LabelledImages, val: LabelledImages },
}

impl TaskData {
    fn train_len(&self) -> usize {
        match self {
            TaskData::Pose { train, .. } => train.len(),
            TaskData::Classify { train, .. } => train.len(),
        }
    }
}

/// One line of the metrics log: `epoch,split,metric,value`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub epoch: usize,
    pub split: &'static str,
    pub metric: &'static str,
    pub value: f64,
}

impl fmt::Display for MetricRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.epoch, self.split, self.metric, self.value)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochSummary {
    pub epoch: usize,
    pub phase: Phase,
    /// λ at the last iteration of the epoch.
    pub lambda: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    /// PCK (pose) or top-1 accuracy (classification), in percent.
    pub val_metric: f64,
    /// Validation loss under the new phase's mode, before its first update.
    pub phase_start_val_loss: Option<f64>,
}

/// A frozen network whose outputs serve as soft labels.
#[derive(Debug, Clone, Copy)]
pub struct Teacher<'a> {
    pub net: &'a Network<f32>,
    pub mode: ExecMode,
}

/// Node whose activations feature matching compares: the last stage's
/// feature block, or the classifier's pooled features.
pub fn feature_tap(net: &Network<f32>) -> Option<NodeId> {
    let g = net.graph();
    (0..g.len()).rev().find(|&i| {
        let n = &g.node(i).name;
        n.ends_with("features.add") || n == "head.pool"
    })
}

/// Name of the validation metric of a task.
pub fn metric_name(data: &TaskData) -> &'static str {
    match data {
        TaskData::Pose { .. } => "pck",
        TaskData::Classify { .. } => "accuracy",
    }
}

fn epoch_rng(seed: u64, epoch: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(stream);
    rng
}

fn pose_batch(
    set: &PoseDataset,
    idx: &[usize],
    aug: Option<(&AugmentSpec, &mut ChaCha8Rng)>,
) -> Result<(DenseTensor<f32>, DenseTensor<f32>)> {
    let Some((spec, rng)) = aug else {
        return Ok((set.images.gather(idx)?, set.heatmaps.gather(idx)?));
    };
    let mut images = Vec::new();
    let mut heatmaps = Vec::new();
    for &i in idx {
        let s: HeatmapSample = set.sample(i)?;
        let params = spec.sample(rng);
        let a = augment(&s, &params, set.sigma, set.geometry)?;
        images.extend_from_slice(a.image.data());
        heatmaps.extend_from_slice(a.heatmaps.data());
    }
    let mut ishape = set.images.shape().to_vec();
    let mut hshape = set.heatmaps.shape().to_vec();
    ishape[0] = idx.len();
    hshape[0] = idx.len();
    Ok((DenseTensor::new(ishape, images)?, DenseTensor::new(hshape, heatmaps)?))
}

struct StepLoss {
    loss: f64,
    seeds: Vec<(NodeId, DenseTensor<f32>)>,
}

fn batch_loss(
    net: &Network<f32>,
    tape: &crate::net::Tape<f32>,
    target: Target<'_, f32>,
    teacher: Option<(&crate::net::Tape<f32>, &Network<f32>)>,
    cfg: &TrainConfig,
) -> Result<StepLoss> {
    let outputs = net.graph().outputs();
    let mut seeds = Vec::new();
    let mut total = 0.0;
    let teacher_out = teacher.map(|(t, tn)| t.value(*tn.graph().outputs().last().expect("graph has an output")));
    for &o in &outputs {
        let pred = tape.value(o);
        let (l, g) = match (teacher_out, target) {
            (Some(t), _) => distill_loss(pred, t, target, cfg.distill.gt_weight)?,
            (None, Target::Heatmaps(h)) => bce_heatmap_loss(pred, h)?,
            (None, Target::Labels(l)) => softmax_ce_loss(pred, l)?,
        };
        total += f64::from(l);
        seeds.push((o, g));
    }
    if let (Some((ttape, tnet)), true) = (teacher, cfg.distill.match_features) {
        let (Some(s_tap), Some(t_tap)) = (feature_tap(net), feature_tap(tnet)) else {
            return Err(Error::Train("feature matching needs a feature tap in both networks".into()));
        };
        let (l, mut g) = feature_match_loss(tape.value(s_tap), ttape.value(t_tap))?;
        g.scale(FEATURE_MATCH_WEIGHT as f32);
        total += FEATURE_MATCH_WEIGHT * f64::from(l);
        seeds.push((s_tap, g));
    }
    Ok(StepLoss { loss: total, seeds })
}

/// Validation loss (supervised, final output) and metric under `mode`.
pub fn evaluate(net: &Network<f32>, mode: ExecMode, data: &TaskData, batch: usize, pck_threshold: f64) -> Result<(f64, f64)> {
    let mode = ExecMode { training: false, ..mode };
    match data {
        TaskData::Pose { val, .. } => {
            let outs = net.predict(&val.images, mode, batch)?;
            let last = outs.last().ok_or_else(|| Error::Graph("network has no outputs".into()))?;
            let (loss, _) = bce_heatmap_loss(last, &val.heatmaps)?;
            let metric = pck(last, &val.landmarks, pck_threshold, val.geometry)?;
            Ok((f64::from(loss), metric))
        }
        TaskData::Classify { val, .. } => {
            let outs = net.predict(&val.images, mode, batch)?;
            let logits = outs.last().ok_or_else(|| Error::Graph("network has no outputs".into()))?;
            let labels: Vec<usize> = val.labels.iter().map(|&l| l as usize).collect();
            let (loss, _) = softmax_ce_loss(logits, &labels)?;
            let k = logits.shape()[1];
            let correct = logits
                .data()
                .chunks(k)
                .zip(&labels)
                .filter(|(row, &l)| (0..k).fold(0, |b, j| if row[j] > row[b] { j } else { b }) == l)
                .count();
            Ok((f64::from(loss), 100.0 * correct as f64 / labels.len().max(1) as f64))
        }
    }
}

/// Runs epochs `state.epoch..cfg.epochs`, emitting metric records as it goes.
pub fn train(
    state: &mut TrainState,
    cfg: &TrainConfig,
    data: &TaskData,
    teacher: Option<Teacher<'_>>,
    sink: &mut dyn FnMut(&MetricRecord),
) -> Result<Vec<EpochSummary>> {
    if cfg.batch_size < 2 {
        return Err(Error::Config("batch size must be at least 2 (batch statistics)".into()));
    }
    let n = data.train_len();
    let batches = n / cfg.batch_size;
    if batches == 0 {
        return Err(Error::Config(format!("{n} training samples cannot fill a batch of {}", cfg.batch_size)));
    }
    let schedule = LambdaSchedule::spanning(
        cfg.quant.lambda_start,
        cfg.quant.lambda_end,
        cfg.quant.stages,
        cfg.phase_a_epochs() * batches,
    );
    let clamp: Vec<bool> = state.net.graph().nodes().iter().map(|n| n.binarize).collect();
    let metric = metric_name(data);
    let mut summaries = Vec::new();
    while state.epoch < cfg.epochs {
        let epoch = state.epoch;
        let phase = cfg.phase_for_epoch(epoch);
        let mut phase_start_val_loss = None;
        if phase != state.phase {
            state.set_phase(phase)?;
            if phase == Phase::BinFull {
                let (l, _) = evaluate(&state.net, state.inference_mode(cfg.quant.hard_threshold)?, data, cfg.eval_batch, cfg.pck_threshold)?;
                phase_start_val_loss = Some(l);
                sink(&MetricRecord { epoch, split: "val", metric: "phase_start_loss", value: l });
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut epoch_rng(state.rng_seed, epoch, 0));
        let mut aug_rng = epoch_rng(state.rng_seed, epoch, 1);
        let lr = cfg.lr.at(epoch);
        let mut loss_sum = 0.0;
        for b in 0..batches {
            if phase == Phase::BinFeatures && state.approx != ApproxKind::Hard {
                state.lambda = lambda_at(&schedule, epoch * batches + b);
            }
            let idx = &order[b * cfg.batch_size..(b + 1) * cfg.batch_size];
            let mode = state.exec_mode(true)?;
            let (input, heat, labels);
            let target = match data {
                TaskData::Pose { train, .. } => {
                    let (x, h) = pose_batch(train, idx, cfg.augment.as_ref().map(|s| (s, &mut aug_rng)))?;
                    input = x;
                    heat = h;
                    Target::Heatmaps(&heat)
                }
                TaskData::Classify { train, .. } => {
                    input = train.images.gather(idx)?;
                    labels = idx.iter().map(|&i| train.labels[i] as usize).collect::<Vec<_>>();
                    Target::Labels(&labels)
                }
            };
            let ttape = match teacher {
                Some(t) => Some(t.net.forward(&input, ExecMode { training: false, ..t.mode })?),
                None => None,
            };
            let tape = state.net.forward(&input, mode)?;
            let step = batch_loss(&state.net, &tape, target, ttape.as_ref().zip(teacher.map(|t| t.net)), cfg)?;
            state.net.commit_running_stats(&tape);
            let grads = state.net.backward(tape, step.seeds)?;
            state.step += 1;
            if step.loss.is_finite() {
                loss_sum += step.loss;
                optimizer_step(state.net.params_mut(), &grads.params, &mut state.optim, lr, &cfg.hyper, &clamp)?;
            } else {
                log::warn!("non-finite loss at epoch {epoch}, batch {b}; update skipped");
            }
        }
        let train_loss = loss_sum / batches as f64;
        let (val_loss, val_metric) = evaluate(&state.net, state.inference_mode(cfg.quant.hard_threshold)?, data, cfg.eval_batch, cfg.pck_threshold)?;
        state.epoch += 1;
        for (split, name, value) in [
            ("train", "loss", train_loss),
            ("train", "lambda", state.lambda),
            ("train", "lr", lr),
            ("train", "phase", f64::from(phase.code())),
            ("val", "loss", val_loss),
            ("val", metric, val_metric),
        ] {
            sink(&MetricRecord { epoch, split, metric: name, value });
        }
        log::info!("epoch {epoch} {phase} loss {train_loss:.5} val {metric} {val_metric:.2}");
        summaries.push(EpochSummary {
            epoch,
            phase,
            lambda: state.lambda,
            train_loss,
            val_loss,
            val_metric,
            phase_start_val_loss,
        });
    }
    Ok(summaries)
}
