//! Dataset readers, synthetic generators and the PCK metric.

mod idx;
mod pck;
mod synth;

pub use idx::{decode_idx_pair, encode_idx, load_idx_archive, parse_idx, IdxArray, LabelledImages, IMAGES_MAGIC, LABELS_MAGIC};
pub use pck::{argmax_landmarks, pck, pck_points, random_pck_baseline, PCK_THRESHOLD};
pub use synth::{
    bbox_diagonal, render_heatmaps, synth_glyphs, synth_pose_dataset, HeatmapGeometry, HeatmapSample, PoseDataset,
    FLIP_PAIRS, LANDMARK_NAMES, MIN_FIGURE_DIAG,
};
