//! Storage and speed measurements behind `xnorpose bench`.

use std::io::Write;
use std::time::Instant;

use serde::Serialize;

use crate::binarize::{weight_scale, ScaleGranularity};
use crate::bitcore::{binary_conv2d, naive_conv2d, pack, pack_filters, packed_weight_bytes, sign, DenseTensor, ZeroPolicy};
use crate::error::Result;
use crate::models::{build_classifier, build_pose_model, ActSpec, ClassifierPreset, HourglassSpec, LayerGraph};

#[derive(Debug, Clone)]
pub struct BenchOptions {
    /// Timing repetitions; the fastest is reported.
    pub reps: usize,
    /// Channels and spatial side of the speed workload.
    pub channels: usize,
    pub size: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions { reps: 3, channels: 64, size: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompressionRecord {
    pub kind: &'static str,
    pub model: String,
    pub layer: String,
    pub shape: Vec<usize>,
    pub weights: usize,
    pub f32_bytes: usize,
    /// Packed sign bits plus one f32 scale per filter.
    pub packed_bytes: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedRecord {
    pub kind: &'static str,
    pub workload: String,
    pub naive_ms: f64,
    pub xnor_ms: f64,
    pub speedup: f64,
    pub reps: usize,
}

/// Deterministic weights in `[-0.5, 0.5)`.
pub fn lcg_tensor(shape: &[usize], seed: u64) -> DenseTensor<f32> {
    let mut s = seed;
    DenseTensor::from_fn(shape, |_| {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((s >> 40) as f32 / (1u64 << 24) as f32) - 0.5
    })
}

/// Packs `w` for storage and compares against its f32 size.
pub fn measure_compression(model: &str, layer: &str, w: &DenseTensor<f32>) -> Result<CompressionRecord> {
    let bits = pack_filters(w)?;
    let alpha = weight_scale(w, ScaleGranularity::PerFilter)?;
    let packed_bytes = packed_weight_bytes(&bits, alpha.len());
    let f32_bytes = 4 * w.len();
    Ok(CompressionRecord {
        kind: "compression",
        model: model.into(),
        layer: layer.into(),
        shape: w.shape().to_vec(),
        weights: w.len(),
        f32_bytes,
        packed_bytes,
        ratio: f32_bytes as f64 / packed_bytes as f64,
    })
}

/// Models whose binary layers the compression report covers.
pub fn bench_models() -> Result<Vec<(String, LayerGraph)>> {
    let act = ActSpec::default();
    let mut out = vec![
        ("pose_desk".to_string(), build_pose_model(&HourglassSpec::new(2, 16, 5, 16), 1, 1, true)?),
        ("pose_desk_2stack".to_string(), build_pose_model(&HourglassSpec::new(2, 16, 5, 16), 1, 2, true)?),
        ("pose_full_width".to_string(), build_pose_model(&HourglassSpec::new(4, 256, 16, 64), 3, 1, true)?),
    ];
    for (name, preset) in [
        ("tiny", ClassifierPreset::Tiny),
        ("alexnet_like", ClassifierPreset::AlexnetLike),
        ("resnet18_like", ClassifierPreset::Resnet18Like),
    ] {
        out.push((name.to_string(), build_classifier(preset, 10, 1.0, act)?));
    }
    Ok(out)
}

/// One record per binary layer of every model in [`bench_models`].
pub fn compression_report() -> Result<Vec<CompressionRecord>> {
    let mut out = Vec::new();
    for (model, graph) in bench_models()? {
        for (i, node) in graph.nodes().iter().enumerate() {
            if let (true, Some(shape)) = (node.op.is_binary(), node.op.weight_shape()) {
                out.push(measure_compression(&model, &node.name, &lcg_tensor(&shape, i as u64 + 1))?);
            }
        }
    }
    Ok(out)
}

fn fastest(reps: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    let mut best = f64::INFINITY;
    for _ in 0..reps.max(1) {
        let t = Instant::now();
        f()?;
        best = best.min(t.elapsed().as_secs_f64());
    }
    Ok(best)
}

/// Times a 3×3, stride 1, pad 1 convolution with `c` filters over a `c`
/// channel `s`×`s` input: the scalar float loop on ±1 values against the
/// packed kernel. Input packing counts toward the packed time; weights are
/// packed once beforehand.
pub fn measure_speed(c: usize, s: usize, reps: usize) -> Result<SpeedRecord> {
    let x = lcg_tensor(&[1, c, s, s], 101);
    let w = lcg_tensor(&[c, c, 3, 3], 202);
    let wbits = pack(&w, 1, ZeroPolicy::Ceil)?;
    let alpha = weight_scale(&w, ScaleGranularity::PerFilter)?;
    let (xs, ws) = (x.map(sign), w.map(sign));
    let naive = fastest(reps, || naive_conv2d(&xs, &ws, 1, 1, -1.0).map(drop))?;
    let xnor = fastest(reps, || binary_conv2d(&pack(&x, 1, ZeroPolicy::Ceil)?, &wbits, &alpha, 1, 1).map(drop))?;
    Ok(SpeedRecord {
        kind: "speed",
        workload: format!("{c}x{s}x{s} input, {c} 3x3 filters, stride 1, pad 1"),
        naive_ms: naive * 1e3,
        xnor_ms: xnor * 1e3,
        speedup: naive / xnor,
        reps,
    })
}

/// JSON lines: compression records, then one speed record.
pub fn cmd_bench(opts: &BenchOptions, out: &mut dyn Write) -> Result<()> {
    let json = |e: serde_json::Error| crate::Error::Numeric(format!("cannot encode record: {e}"));
    for r in compression_report()? {
        writeln!(out, "{}", serde_json::to_string(&r).map_err(json)?)?;
    }
    let speed = measure_speed(opts.channels, opts.size, opts.reps)?;
    writeln!(out, "{}", serde_json::to_string(&speed).map_err(json)?)?;
    Ok(())
}
