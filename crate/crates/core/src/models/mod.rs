//! Network descriptions and builders.

mod builders;
mod graph;

pub use builders::{
    build_classifier, build_hier_block, build_hourglass, build_pose_model, build_stack, ActSpec, ClassifierPreset,
    HourglassSpec, StackSpec, STEM_REDUCTION,
};
pub use graph::{LayerGraph, Node, NodeId, Op};
