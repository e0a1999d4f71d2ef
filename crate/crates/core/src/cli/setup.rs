//! Turning a [`RunConfig`] into data, a model and a training recipe.

use std::path::Path;

use crate::binarize::ApproxKind;
use crate::data::{load_idx_archive, synth_glyphs, synth_pose_dataset, LabelledImages};
use crate::error::{Error, Result};
use crate::layers::Activation;
use crate::models::{build_classifier, build_pose_model, ActSpec, HourglassSpec, LayerGraph, STEM_REDUCTION};
use crate::net::Network;
use crate::train::{
    AugmentSpec, DistillConfig, InitOrder, LrSchedule, OptimHyper, OptimizerKind, QuantConfig, Recipe, TaskData,
    TrainConfig, TrainState,
};

use super::config::RunConfig;

fn act_spec(cfg: &RunConfig) -> Result<ActSpec> {
    let kind: Activation = cfg.get("model.act").parse().map_err(|e| Error::Config(format!("key 'model.act': {e}")))?;
    Ok(ActSpec { kind, per_channel: cfg.flag("model.prelu_per_channel") })
}

pub fn hourglass_spec(cfg: &RunConfig) -> Result<HourglassSpec> {
    let image: usize = cfg.parse("data.image_size")?;
    if image % STEM_REDUCTION != 0 {
        return Err(Error::Config(format!("key 'data.image_size': {image} is not a multiple of {STEM_REDUCTION}")));
    }
    let mut hg = HourglassSpec::new(cfg.parse("model.depth")?, cfg.parse("model.width")?, cfg.parse("data.landmarks")?, image / STEM_REDUCTION);
    hg.act = act_spec(cfg)?;
    Ok(hg)
}

/// Graph named by the resolved `model.*` keys.
pub fn build_model(cfg: &RunConfig) -> Result<LayerGraph> {
    let cfg = cfg.resolved()?;
    match cfg.get("model.preset") {
        "desk" => build_pose_model(&hourglass_spec(&cfg)?, 1, cfg.parse("model.stacks")?, cfg.flag("model.binarize_joins")),
        p => build_classifier(p.parse()?, cfg.parse("model.classes")?, cfg.parse("model.width_factor")?, act_spec(&cfg)?),
    }
}

pub fn train_config(cfg: &RunConfig) -> Result<TrainConfig> {
    let (lr, optimizer) = match cfg.get("train.recipe") {
        "custom" => (
            LrSchedule {
                base: cfg.parse("train.lr")?,
                factor: cfg.parse("train.lr_drop_factor")?,
                every: cfg.parse("train.lr_drop_every")?,
            },
            cfg.parse::<OptimizerKind>("train.optimizer")?,
        ),
        r => {
            let recipe: Recipe = r.parse()?;
            let opt = if recipe == Recipe::Pose { OptimizerKind::RmsProp } else { OptimizerKind::Adam };
            (LrSchedule::recipe(recipe), opt)
        }
    };
    let gt_weight: f64 = cfg.parse("distill.gt_weight")?;
    if !(0.0..=1.0).contains(&gt_weight) {
        return Err(Error::Config(format!("key 'distill.gt_weight': {gt_weight} is outside [0, 1]")));
    }
    let phase_a_frac: f64 = cfg.parse("train.phase_a_frac")?;
    if !(0.0..=1.0).contains(&phase_a_frac) {
        return Err(Error::Config(format!("key 'train.phase_a_frac': {phase_a_frac} is outside [0, 1]")));
    }
    Ok(TrainConfig {
        epochs: cfg.parse("train.epochs")?,
        batch_size: cfg.parse("train.batch")?,
        phase_a_frac,
        init: cfg.parse::<InitOrder>("train.init")?,
        quant: QuantConfig {
            kind: cfg.parse::<ApproxKind>("quant.kind")?,
            lambda_start: cfg.parse("quant.lambda_start")?,
            lambda_end: cfg.parse("quant.lambda_end")?,
            stages: cfg.parse("quant.stages")?,
            hard_threshold: cfg.parse("quant.hard_threshold")?,
        },
        optimizer,
        hyper: OptimHyper::default(),
        lr,
        seed: cfg.parse("train.seed")?,
        augment: cfg.flag("aug.enabled").then(AugmentSpec::default),
        eval_batch: cfg.parse::<usize>("eval.batch")?.max(1),
        pck_threshold: cfg.parse("eval.pck_threshold")?,
        distill: DistillConfig { gt_weight, match_features: cfg.flag("distill.match_features") },
    })
}

fn idx_pair(cfg: &RunConfig, images: &str, labels: &str) -> Result<LabelledImages> {
    let (i, l) = (cfg.get(images), cfg.get(labels));
    if i.is_empty() || l.is_empty() {
        return Err(Error::Config(format!("data.source = idx needs '{images}' and '{labels}'")));
    }
    load_idx_archive(Path::new(i), Path::new(l))
}

pub fn load_data(cfg: &RunConfig) -> Result<TaskData> {
    let seed: u64 = cfg.parse("data.seed")?;
    let (n_train, n_val): (usize, usize) = (cfg.parse("data.train_samples")?, cfg.parse("data.val_samples")?);
    match (cfg.get("task"), cfg.get("data.source")) {
        ("pose", "synth") => {
            let image: usize = cfg.parse("data.image_size")?;
            let (l, sigma) = (cfg.parse("data.landmarks")?, cfg.parse("data.sigma")?);
            let hm = image / STEM_REDUCTION;
            Ok(TaskData::Pose {
                train: synth_pose_dataset(n_train, seed, l, image, hm, sigma)?,
                val: synth_pose_dataset(n_val, seed.wrapping_add(1), l, image, hm, sigma)?,
            })
        }
        ("pose", _) => Err(Error::Config("key 'data.source': pose data is synthetic only".into())),
        (_, "synth") => Ok(TaskData::Classify { train: synth_glyphs(n_train, seed)?, val: synth_glyphs(n_val, seed.wrapping_add(1))? }),
        _ => Ok(TaskData::Classify {
            train: idx_pair(cfg, "data.train_images", "data.train_labels")?,
            val: idx_pair(cfg, "data.val_images", "data.val_labels")?,
        }),
    }
}

/// Fresh state: initialized network, optimizer moments and λ at the start.
pub fn init_state(cfg: &RunConfig) -> Result<TrainState> {
    let tc = train_config(cfg)?;
    let net = Network::init(build_model(cfg)?, tc.seed);
    Ok(TrainState::new(net, tc.optimizer, tc.quant.kind, tc.quant.lambda_start, tc.seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_builds_desk_model() {
        let cfg = RunConfig::default();
        let g = build_model(&cfg).unwrap();
        assert_eq!(g.stack_count(), 1);
        let shapes = g.infer_shapes().unwrap();
        assert_eq!(shapes[*g.outputs().last().unwrap()], vec![5, 16, 16]);
        let tc = train_config(&cfg).unwrap();
        assert_eq!(tc.epochs, 20);
        assert_eq!(tc.init, InitOrder::Reverse);
    }

    #[test]
    fn recipes_override_lr() {
        let mut cfg = RunConfig::default();
        cfg.set("train.recipe", "imagenet_like").unwrap();
        let tc = train_config(&cfg).unwrap();
        assert_eq!(tc.optimizer, OptimizerKind::Adam);
        assert_eq!(tc.lr.at(25), 1e-3 * 0.1);
    }
}
