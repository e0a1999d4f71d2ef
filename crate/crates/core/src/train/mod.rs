//! Losses, optimizers, schedules, the phased training loop and checkpoints.

mod ablation;
mod augment;
mod checkpoint;
mod loss;
mod optim;
mod pipeline;
mod schedule;
mod state;

pub use ablation::{run_ablation, AblationReport, PoseExperiment, Variant, VariantResult};
pub use augment::{augment, AffineParams, AugmentSpec};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use loss::{
    bce_heatmap_loss, distill_loss, feature_match_loss, one_hot, soft_target_ce, softmax, softmax_ce_loss, Target,
    BCE_CLAMP, FEATURE_MATCH_WEIGHT,
};
pub use optim::{adam_step, optimizer_step, rmsprop_step, OptimHyper, OptimState, OptimizerKind};
pub use pipeline::{
    evaluate, feature_tap, metric_name, train, DistillConfig, EpochSummary, InitOrder, MetricRecord, QuantConfig,
    TaskData, Teacher, TrainConfig,
};
pub use schedule::{lr_schedule, LrSchedule, Recipe};
pub use state::{Phase, TrainState};
