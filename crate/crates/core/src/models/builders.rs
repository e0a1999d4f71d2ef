use crate::error::{Error, Result};
use crate::layers::Activation;

use super::graph::{LayerGraph, NodeId, Op};

/// Non-linearity placed after every binary convolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActSpec {
    pub kind: Activation,
    /// One PReLU slope per channel, or a single shared slope.
    pub per_channel: bool,
}

impl Default for ActSpec {
    fn default() -> Self {
        ActSpec { kind: Activation::Prelu, per_channel: true }
    }
}

impl ActSpec {
    pub fn new(kind: Activation) -> Self {
        ActSpec { kind, per_channel: true }
    }

    fn op(&self, channels: usize) -> Op {
        let slopes = match self.kind {
            Activation::Prelu if self.per_channel => channels,
            Activation::Prelu => 1,
            _ => 0,
        };
        Op::Act { kind: self.kind, slopes }
    }
}

fn channels(g: &LayerGraph, id: NodeId) -> Result<usize> {
    Ok(g.infer_shapes()?[id][0])
}

/// `bn -> binary conv -> act`, returning the activation node.
fn bin_unit(g: &mut LayerGraph, name: &str, x: NodeId, c_out: usize, k: usize, act: ActSpec) -> Result<NodeId> {
    let c_in = channels(g, x)?;
    let bn = g.push(format!("{name}.bn"), Op::BatchNorm { c: c_in }, &[x])?;
    let conv = g.push(format!("{name}.conv"), Op::BinConv { c_in, c_out, k, stride: 1, pad: k / 2 }, &[bn])?;
    g.push(format!("{name}.act"), act.op(c_out), &[conv])
}

/// Appends a hierarchical residual block reading from `x`.
///
/// Three binary 3×3 units in series produce `c_out/2`, `c_out/4` and
/// `c_out/4` channels; their outputs are concatenated and added to the skip
/// path (a real 1×1 projection when the channel count changes).
pub fn build_hier_block(g: &mut LayerGraph, name: &str, x: NodeId, c_out: usize, act: ActSpec) -> Result<NodeId> {
    if c_out == 0 || c_out % 4 != 0 {
        return Err(Error::Graph(format!("block '{name}': output channels {c_out} not divisible by 4")));
    }
    let c_in = channels(g, x)?;
    let b1 = bin_unit(g, &format!("{name}.b1"), x, c_out / 2, 3, act)?;
    let b2 = bin_unit(g, &format!("{name}.b2"), b1, c_out / 4, 3, act)?;
    let b3 = bin_unit(g, &format!("{name}.b3"), b2, c_out / 4, 3, act)?;
    let cat = g.push(format!("{name}.cat"), Op::Concat, &[b1, b2, b3])?;
    let skip = if c_in == c_out {
        x
    } else {
        let op = Op::Conv { c_in, c_out, k: 1, stride: 1, pad: 0, bias: true };
        g.push(format!("{name}.proj"), op, &[x])?
    };
    g.push(format!("{name}.add"), Op::Add, &[cat, skip])
}

/// Shape of a standalone hourglass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HourglassSpec {
    pub depth: usize,
    pub width: usize,
    pub landmarks: usize,
    /// Side of the square feature map entering the hourglass.
    pub input_size: usize,
    pub act: ActSpec,
}

impl HourglassSpec {
    pub fn new(depth: usize, width: usize, landmarks: usize, input_size: usize) -> Self {
        HourglassSpec { depth, width, landmarks, input_size, act: ActSpec::default() }
    }
}

fn hourglass_body(g: &mut LayerGraph, prefix: &str, level: usize, x: NodeId, spec: &HourglassSpec) -> Result<NodeId> {
    let w = spec.width;
    let up1 = build_hier_block(g, &format!("{prefix}up1"), x, w, spec.act)?;
    let pool = g.push(format!("{prefix}pool"), Op::MaxPool { k: 2, stride: 2, pad: 0 }, &[x])?;
    let low1 = build_hier_block(g, &format!("{prefix}low1"), pool, w, spec.act)?;
    let low2 = if level > 1 {
        hourglass_body(g, &format!("{prefix}inner."), level - 1, low1, spec)?
    } else {
        build_hier_block(g, &format!("{prefix}low2"), low1, w, spec.act)?
    };
    let low3 = build_hier_block(g, &format!("{prefix}low3"), low2, w, spec.act)?;
    let up2 = g.push(format!("{prefix}up"), Op::Upsample { factor: 2 }, &[low3])?;
    g.push(format!("{prefix}merge"), Op::Add, &[up1, up2])
}

/// Hourglass over a `width`-channel feature map, with a heatmap head.
///
/// The head is a `features` block, a real 1×1 `logits` conv and a sigmoid
/// `heatmap`; those node names are stable so stacks can tap them.
pub fn build_hourglass(spec: &HourglassSpec) -> Result<LayerGraph> {
    if spec.depth == 0 {
        return Err(Error::Graph("hourglass depth must be >= 1".into()));
    }
    if spec.input_size == 0 || spec.input_size % (1 << spec.depth) != 0 {
        return Err(Error::Graph(format!(
            "input size {} not divisible by 2^{}",
            spec.input_size, spec.depth
        )));
    }
    let mut g = LayerGraph::new();
    let s = spec.input_size;
    let x = g.push("input", Op::Input { c: spec.width, h: s, w: s }, &[])?;
    let body = hourglass_body(&mut g, "hg.", spec.depth, x, spec)?;
    let feats = build_hier_block(&mut g, "features", body, spec.width, spec.act)?;
    let logits_op = Op::Conv { c_in: spec.width, c_out: spec.landmarks, k: 1, stride: 1, pad: 0, bias: true };
    let logits = g.push("logits", logits_op, &[feats])?;
    let heat = g.push("heatmap", Op::Sigmoid, &[logits])?;
    g.push("output", Op::Output, &[heat])?;
    Ok(g)
}

/// Full pose network: image stem, `n_stacks` hourglasses and joins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StackSpec {
    pub image_channels: usize,
    pub image_size: usize,
    pub n_stacks: usize,
    pub binarize_joins: bool,
}

/// Resolution reduction of the stem (stride-2 conv then 2×2 max-pool).
pub const STEM_REDUCTION: usize = 4;

/// Stacks copies of `hg` behind a real stem. Every stage ends in an output
/// node (intermediate supervision); stage `i+1` reads
/// `input_i + J_f(features_i) + J_h(logits_i)`.
pub fn build_stack(hg: &LayerGraph, spec: &StackSpec) -> Result<LayerGraph> {
    if spec.n_stacks == 0 {
        return Err(Error::Graph("n_stacks must be >= 1".into()));
    }
    let hg_in = hg.input_node()?;
    let Op::Input { c: width, h: hg_size, .. } = hg.node(hg_in).op else {
        unreachable!("input_node returns an input op")
    };
    let (Some(feat_id), Some(logit_id)) = (hg.find("features.add"), hg.find("logits")) else {
        return Err(Error::Graph("hourglass lacks features/logits taps".into()));
    };
    let landmarks = hg.infer_shapes()?[logit_id][0];
    if spec.image_size != hg_size * STEM_REDUCTION {
        return Err(Error::Graph(format!(
            "image size {} does not reduce to hourglass size {hg_size}",
            spec.image_size
        )));
    }
    let act = stem_act(hg);

    let mut g = LayerGraph::new();
    let (c, s) = (spec.image_channels, spec.image_size);
    let x = g.push("input", Op::Input { c, h: s, w: s }, &[])?;
    let conv = g.push("stem.conv", Op::Conv { c_in: c, c_out: width, k: 3, stride: 2, pad: 1, bias: true }, &[x])?;
    let bn = g.push("stem.bn", Op::BatchNorm { c: width }, &[conv])?;
    let a = g.push("stem.act", act.op(width), &[bn])?;
    let pool = g.push("stem.pool", Op::MaxPool { k: 2, stride: 2, pad: 0 }, &[a])?;
    let mut cur = build_hier_block(&mut g, "stem.block", pool, width, act)?;

    for i in 0..spec.n_stacks {
        let prefix = format!("s{i}.");
        let map = g.inline(hg, &prefix, cur)?;
        let out_src = map[hg.outputs()[0]];
        g.push(format!("{prefix}out"), Op::Output, &[out_src])?;
        if i + 1 == spec.n_stacks {
            break;
        }
        let jf = join(&mut g, &format!("{prefix}join_f"), map[feat_id], width, spec.binarize_joins)?;
        let jh = join(&mut g, &format!("{prefix}join_h"), map[logit_id], width, spec.binarize_joins)?;
        cur = g.push(format!("{prefix}next"), Op::Add, &[cur, jf, jh])?;
    }
    debug_assert_eq!(g.infer_shapes()?[g.outputs()[0]][0], landmarks);
    g.set_stack_count(spec.n_stacks);
    Ok(g)
}

fn stem_act(hg: &LayerGraph) -> ActSpec {
    hg.nodes()
        .iter()
        .find_map(|n| match n.op {
            Op::Act { kind, slopes } => Some(ActSpec { kind, per_channel: slopes != 1 }),
            _ => None,
        })
        .unwrap_or_default()
}

fn join(g: &mut LayerGraph, name: &str, x: NodeId, c_out: usize, binarize: bool) -> Result<NodeId> {
    let c_in = channels(g, x)?;
    if binarize {
        let bn = g.push(format!("{name}.bn"), Op::BatchNorm { c: c_in }, &[x])?;
        g.push(format!("{name}.conv"), Op::BinConv { c_in, c_out, k: 1, stride: 1, pad: 0 }, &[bn])
    } else {
        g.push(format!("{name}.conv"), Op::Conv { c_in, c_out, k: 1, stride: 1, pad: 0, bias: true }, &[x])
    }
}

/// Convenience: stem plus stacked hourglasses for square grayscale or color input.
pub fn build_pose_model(hg: &HourglassSpec, image_channels: usize, n_stacks: usize, binarize_joins: bool) -> Result<LayerGraph> {
    let g = build_hourglass(hg)?;
    let spec = StackSpec { image_channels, image_size: hg.input_size * STEM_REDUCTION, n_stacks, binarize_joins };
    build_stack(&g, &spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierPreset {
    Tiny,
    AlexnetLike,
    Resnet18Like,
}

impl std::str::FromStr for ClassifierPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tiny" => Ok(ClassifierPreset::Tiny),
            "alexnet_like" => Ok(ClassifierPreset::AlexnetLike),
            "resnet18_like" => Ok(ClassifierPreset::Resnet18Like),
            _ => Err(Error::Config(format!("unknown classifier preset '{s}'"))),
        }
    }
}

/// Classifier with a real stem and a real linear head.
///
/// `tiny` expects 28×28 single-channel input. The other presets describe
/// full-size 224×224 color networks whose channel lists are multiplied by
/// `width_factor`; they are built for inspection, not trained here.
pub fn build_classifier(preset: ClassifierPreset, num_classes: usize, width_factor: f64, act: ActSpec) -> Result<LayerGraph> {
    if !(width_factor > 0.0) {
        return Err(Error::Graph("width factor must be positive".into()));
    }
    let scale = |c: usize| ((c as f64 * width_factor).round() as usize).max(1);
    match preset {
        ClassifierPreset::Tiny => tiny(num_classes, scale, act),
        ClassifierPreset::AlexnetLike => alexnet_like(num_classes, scale, act),
        ClassifierPreset::Resnet18Like => resnet18_like(num_classes, scale, act),
    }
}

fn head(g: &mut LayerGraph, x: NodeId, num_classes: usize) -> Result<NodeId> {
    let c = channels(g, x)?;
    let pool = g.push("head.pool", Op::AvgPool, &[x])?;
    let fc = g.push("head.fc", Op::Linear { d_in: c, d_out: num_classes, bias: true }, &[pool])?;
    g.push("output", Op::Output, &[fc])
}

/// Widths are multiples of the 64-bit word so packed rows carry no padding.
fn tiny(num_classes: usize, scale: impl Fn(usize) -> usize, act: ActSpec) -> Result<LayerGraph> {
    let mut g = LayerGraph::new();
    let x = g.push("input", Op::Input { c: 1, h: 28, w: 28 }, &[])?;
    let c0 = scale(64);
    let stem = g.push("stem.conv", Op::Conv { c_in: 1, c_out: c0, k: 3, stride: 1, pad: 1, bias: true }, &[x])?;
    let mut cur = g.push("stem.act", act.op(c0), &[stem])?;
    let plan = [(scale(64), false), (scale(64), true), (scale(128), false), (scale(128), true)];
    for (i, &(c, pool)) in plan.iter().enumerate() {
        cur = bin_unit(&mut g, &format!("block{}", i + 1), cur, c, 3, act)?;
        if pool {
            cur = g.push(format!("block{}.pool", i + 1), Op::MaxPool { k: 2, stride: 2, pad: 0 }, &[cur])?;
        }
    }
    head(&mut g, cur, num_classes)?;
    Ok(g)
}

fn alexnet_like(num_classes: usize, scale: impl Fn(usize) -> usize, act: ActSpec) -> Result<LayerGraph> {
    let mut g = LayerGraph::new();
    let x = g.push("input", Op::Input { c: 3, h: 224, w: 224 }, &[])?;
    let c1 = scale(96);
    let conv1 = g.push("conv1", Op::Conv { c_in: 3, c_out: c1, k: 11, stride: 4, pad: 2, bias: true }, &[x])?;
    let a1 = g.push("conv1.act", act.op(c1), &[conv1])?;
    let mut cur = g.push("conv1.pool", Op::MaxPool { k: 3, stride: 2, pad: 0 }, &[a1])?;
    let plan = [(256, 5, true), (384, 3, false), (384, 3, false), (256, 3, true)];
    for (i, &(c, k, pool)) in plan.iter().enumerate() {
        let name = format!("conv{}", i + 2);
        cur = bin_unit(&mut g, &name, cur, scale(c), k, act)?;
        if pool {
            cur = g.push(format!("{name}.pool"), Op::MaxPool { k: 3, stride: 2, pad: 0 }, &[cur])?;
        }
    }
    let flat = g.push("flatten", Op::Flatten, &[cur])?;
    let d = g.infer_shapes()?[flat][0];
    let h = scale(4096);
    let bn6 = g.push("fc6.bn", Op::BatchNorm { c: d }, &[flat])?;
    let fc6 = g.push("fc6", Op::BinLinear { d_in: d, d_out: h }, &[bn6])?;
    let a6 = g.push("fc6.act", act.op(h), &[fc6])?;
    let bn7 = g.push("fc7.bn", Op::BatchNorm { c: h }, &[a6])?;
    let fc7 = g.push("fc7", Op::BinLinear { d_in: h, d_out: h }, &[bn7])?;
    let a7 = g.push("fc7.act", act.op(h), &[fc7])?;
    let fc8 = g.push("fc8", Op::Linear { d_in: h, d_out: num_classes, bias: true }, &[a7])?;
    g.push("output", Op::Output, &[fc8])?;
    Ok(g)
}

fn resnet18_like(num_classes: usize, scale: impl Fn(usize) -> usize, act: ActSpec) -> Result<LayerGraph> {
    let mut g = LayerGraph::new();
    let x = g.push("input", Op::Input { c: 3, h: 224, w: 224 }, &[])?;
    let c0 = scale(64);
    let conv = g.push("stem.conv", Op::Conv { c_in: 3, c_out: c0, k: 7, stride: 2, pad: 3, bias: true }, &[x])?;
    let bn = g.push("stem.bn", Op::BatchNorm { c: c0 }, &[conv])?;
    let a = g.push("stem.act", act.op(c0), &[bn])?;
    let mut cur = g.push("stem.pool", Op::MaxPool { k: 3, stride: 2, pad: 1 }, &[a])?;
    for (stage, &c) in [64, 128, 256, 512].iter().enumerate() {
        for block in 0..2 {
            let stride = if stage > 0 && block == 0 { 2 } else { 1 };
            cur = basic_block(&mut g, &format!("layer{}.{block}", stage + 1), cur, scale(c), stride, act)?;
        }
    }
    head(&mut g, cur, num_classes)?;
    Ok(g)
}

/// Pre-activation basic block with two binary 3×3 convs.
fn basic_block(g: &mut LayerGraph, name: &str, x: NodeId, c_out: usize, stride: usize, act: ActSpec) -> Result<NodeId> {
    let c_in = channels(g, x)?;
    let bn1 = g.push(format!("{name}.bn1"), Op::BatchNorm { c: c_in }, &[x])?;
    let conv1 = g.push(format!("{name}.conv1"), Op::BinConv { c_in, c_out, k: 3, stride, pad: 1 }, &[bn1])?;
    let a1 = g.push(format!("{name}.act1"), act.op(c_out), &[conv1])?;
    let bn2 = g.push(format!("{name}.bn2"), Op::BatchNorm { c: c_out }, &[a1])?;
    let conv2 = g.push(format!("{name}.conv2"), Op::BinConv { c_in: c_out, c_out, k: 3, stride: 1, pad: 1 }, &[bn2])?;
    let a2 = g.push(format!("{name}.act2"), act.op(c_out), &[conv2])?;
    let skip = if stride == 1 && c_in == c_out {
        x
    } else {
        let op = Op::Conv { c_in, c_out, k: 1, stride, pad: 0, bias: true };
        g.push(format!("{name}.down"), op, &[x])?
    };
    g.push(format!("{name}.add"), Op::Add, &[a2, skip])
}
