use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xnorpose::binarize::{lambda_at, ApproxKind, ApproxSpec, LambdaSchedule};
use xnorpose::bitcore::{binary_conv2d, naive_conv2d, pack, pack_filters, sign, unpack, DenseTensor, ZeroPolicy, WORD_BITS};
use xnorpose::data::{pck, HeatmapGeometry};
use xnorpose::layers::{activation, conv2d_binary, Activation, FeatureMode, WeightMode};
use xnorpose::models::{build_hier_block, build_pose_model, ActSpec, HourglassSpec, LayerGraph, Op};

const SMOOTH: [ApproxKind; 3] = [ApproxKind::Sigmoid, ApproxKind::Softsign, ApproxKind::Tanh];

/// Values in `±[0.05, 1.5)`, never zero.
fn nonzero_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> DenseTensor<f64> {
    DenseTensor::from_fn(shape, |_| {
        let m = rng.random_range(0.05..1.5);
        if rng.random_bool(0.5) { m } else { -m }
    })
}

/// Composite Simpson over `[a, b]` with `n` (even) intervals.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(a) + f(b) + inner) * h / 3.0
}

proptest! {
    #[test]
    fn unpack_of_pack_is_sign(shape in prop::collection::vec(1usize..6, 1..4), axis_pick in 0usize..3, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shape = shape;
        // Give the packed axis a length that crosses word boundaries sometimes.
        let axis = axis_pick % shape.len();
        shape[axis] = rng.random_range(1..140);
        let x = nonzero_tensor(&mut rng, &shape);
        let bits = pack(&x, axis, ZeroPolicy::Strict).unwrap();
        let back: DenseTensor<f64> = unpack(&bits);
        prop_assert_eq!(back.shape(), x.shape());
        let signs = x.map(sign);
        prop_assert_eq!(back.data(), signs.data());
    }

    #[test]
    fn packed_filters_use_one_bit_per_weight(f in 1usize..8, c in 1usize..80, k in 1usize..4) {
        let w = DenseTensor::from_fn(&[f, c, k, k], |i| if i % 3 == 0 { -0.5f32 } else { 0.25 });
        let bits = pack_filters(&w).unwrap();
        let per_filter = c * k * k;
        prop_assert_eq!(bits.words().len(), f * per_filter.div_ceil(WORD_BITS));
    }

    #[test]
    fn binary_conv_scales_with_weights(seed in any::<u64>(), c_scale in 0.01f64..20.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = nonzero_tensor(&mut rng, &[1, 5, 6, 6]);
        let w = nonzero_tensor(&mut rng, &[3, 5, 3, 3]);
        let w_scaled = w.map(|v| v * c_scale);
        let (y, _) = conv2d_binary(&x, &w, FeatureMode::Hard, WeightMode::Binary, 1, 1, true).unwrap();
        let (ys, _) = conv2d_binary(&x, &w_scaled, FeatureMode::Hard, WeightMode::Binary, 1, 1, true).unwrap();
        for (a, b) in y.data().iter().zip(ys.data()) {
            prop_assert!((a * c_scale - b).abs() <= 1e-12 * b.abs().max(1.0), "{} vs {}", a * c_scale, b);
        }
        // Same result straight from the packed kernel with the alphas scaled by hand.
        let xb = pack(&x, 1, ZeroPolicy::Strict).unwrap();
        let wb = pack(&w, 1, ZeroPolicy::Strict).unwrap();
        let alpha: Vec<f64> = (0..3).map(|f| w.data()[f * 45..][..45].iter().map(|v| v.abs()).sum::<f64>() / 45.0 * c_scale).collect();
        let direct = binary_conv2d(&xb, &wb, &alpha, 1, 1).unwrap();
        prop_assert!(direct.max_abs_diff(&ys).unwrap() <= 1e-9);
    }

    #[test]
    fn surrogate_error_shrinks_along_the_schedule(x in 0.1f64..3.0, neg in any::<bool>(), k in 0usize..3) {
        let x = if neg { -x } else { x };
        let s = LambdaSchedule::new(1.0, 65536.0, 17, 1).unwrap();
        let mut prev = f64::INFINITY;
        for step in 0..17 {
            let spec = ApproxSpec::new(SMOOTH[k], lambda_at(&s, step)).unwrap();
            let gap = (spec.value(x) - sign(x)).abs();
            prop_assert!(gap <= prev, "{} rose at step {}", SMOOTH[k], step);
            prev = gap;
        }
    }

    #[test]
    fn tanh_is_within_1e6_of_sign_at_625(x in 0.1f64..10.0, neg in any::<bool>()) {
        let x = if neg { -x } else { x };
        let spec = ApproxSpec::new(ApproxKind::Tanh, 625.0).unwrap();
        prop_assert!((spec.value(x) - sign(x)).abs() < 1e-6);
    }

    #[test]
    fn surrogates_are_odd_with_even_derivatives(x in -5.0f64..5.0, k in 0usize..3, l in 0.1f64..70000.0) {
        let s = ApproxSpec::new(SMOOTH[k], l).unwrap();
        prop_assert_eq!(s.value(-x), -s.value(x));
        prop_assert_eq!(s.derivative(-x), s.derivative(x));
    }

    // Beyond |λx| ≈ 350 the tanh derivative underflows f64, so positivity is
    // checked where it is representable.
    #[test]
    fn smooth_derivatives_are_positive(z in -300.0f64..300.0, k in 0usize..3, l in 1.0f64..65536.0) {
        let s = ApproxSpec::new(SMOOTH[k], l).unwrap();
        prop_assert!(s.derivative(z / l) > 0.0);
    }

    #[test]
    fn derivative_mass_concentrates_near_zero(l in 1.0f64..65536.0, k in 0usize..2) {
        // Tanh meets the 1/λ window; the sigmoid form tanh(λx/2) is twice as
        // wide and needs 2/λ.
        let (kind, window) = [(ApproxKind::Tanh, 1.0), (ApproxKind::Sigmoid, 2.0)][k];
        let s = ApproxSpec::new(kind, l).unwrap();
        let d = |x: f64| s.derivative(x);
        let edge = window / l;
        let inside = simpson(d, -edge, edge, 2000);
        // The tails vanish by 40/λ.
        let outside = 2.0 * simpson(d, edge, 40.0 / l, 20000);
        prop_assert!(inside > outside, "inside {} outside {}", inside, outside);
        prop_assert!((inside + outside - 2.0).abs() < 1e-6);
    }

    // The output gap itself can rise between stages when per-tap errors of
    // opposite sign stop cancelling, so the monotone quantities are the
    // feature gap and the triangle-inequality envelope of the output gap.
    #[test]
    fn binary_layer_approaches_hard_output(seed in any::<u64>(), k in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Inputs at least 0.1 away from zero.
        let x = DenseTensor::from_fn(&[1, 4, 5, 5], |_| {
            let m = rng.random_range(0.1..2.0);
            if rng.random_bool(0.5) { m } else { -m }
        });
        let w = nonzero_tensor(&mut rng, &[2, 4, 3, 3]);
        let alpha: Vec<f64> = (0..2).map(|f| w.data()[f * 36..][..36].iter().map(|v| v.abs()).sum::<f64>() / 36.0).collect();
        let ones = DenseTensor::filled(&[2, 4, 3, 3], 1.0);
        let (hard, _) = conv2d_binary(&x, &w, FeatureMode::Hard, WeightMode::Binary, 1, 1, false).unwrap();
        let s = LambdaSchedule::new(1.0, 65536.0, 17, 1).unwrap();
        let (mut prev_feature, mut prev_envelope) = (f64::INFINITY, f64::INFINITY);
        for step in 0..17 {
            let spec = ApproxSpec::new(SMOOTH[k], lambda_at(&s, step)).unwrap();
            let err = x.map(|v| (spec.value(v) - sign(v)).abs());
            let feature = err.data().iter().copied().fold(0.0, f64::max);
            let taps = naive_conv2d(&err, &ones, 1, 1, 0.0).unwrap();
            let plane = taps.len() / 2;
            let envelope = taps.data().iter().enumerate().map(|(i, t)| alpha[i / plane] * t).fold(0.0, f64::max);
            let (smooth, _) = conv2d_binary(&x, &w, FeatureMode::Smooth(spec), WeightMode::Binary, 1, 1, false).unwrap();
            let gap = smooth.max_abs_diff(&hard).unwrap();
            prop_assert!(feature <= prev_feature);
            prop_assert!(envelope <= prev_envelope + 1e-12);
            prop_assert!(gap <= envelope + 1e-12, "gap {} above envelope {}", gap, envelope);
            (prev_feature, prev_envelope) = (feature, envelope);
        }
        // Softsign closes in only like 1/(λ|x|).
        if SMOOTH[k] == ApproxKind::Softsign {
            prop_assert!(prev_envelope < 0.05);
        } else {
            prop_assert_eq!(prev_envelope, 0.0);
        }
    }

    #[test]
    fn prelu_limits_are_exact(seed in any::<u64>(), c in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DenseTensor::from_fn(&[2, c, 3, 3], |_| rng.random_range(-4.0..4.0f64));
        let ones = vec![1.0; c];
        let zeros = vec![0.0; c];
        let prelu = |slopes: &[f64]| activation(&x, Activation::Prelu, Some(slopes)).unwrap().into_data();
        let relu = activation(&x, Activation::Relu, None).unwrap().into_data();
        prop_assert_eq!(prelu(&ones), x.data());
        prop_assert_eq!(prelu(&zeros), relu.clone());
        prop_assert_eq!(prelu(&[0.0]), relu);
    }

    #[test]
    fn hier_block_branches_sum_to_width(quarter in 1usize..24, c_in in 1usize..64) {
        let c_out = 4 * quarter;
        let mut g = LayerGraph::new();
        let x = g.push("input", Op::Input { c: c_in, h: 4, w: 4 }, &[]).unwrap();
        let b = build_hier_block(&mut g, "blk", x, c_out, ActSpec::default()).unwrap();
        let shapes = g.infer_shapes().unwrap();
        let width = |n: &str| shapes[g.find(n).unwrap()][0];
        prop_assert_eq!(width("blk.b1.conv") + width("blk.b2.conv") + width("blk.b3.conv"), c_out);
        prop_assert_eq!(shapes[b][0], c_out);
    }

    #[test]
    fn pck_ignores_monotone_rescaling(seed in any::<u64>(), gain in 0.5f32..8.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, l, hm) = (2, 3, 8);
        // Distinct, well separated values so the rescaled maps keep every order.
        let mut ranks: Vec<usize> = (0..n * l * hm * hm).collect();
        ranks.shuffle(&mut rng);
        let total = ranks.len() as f32;
        let maps = DenseTensor::new(vec![n, l, hm, hm], ranks.iter().map(|&r| r as f32 / total).collect()).unwrap();
        let rescaled = maps.map(|v| (gain * v).exp() - 3.0);
        let gt: Vec<Vec<(f64, f64)>> =
            (0..n).map(|_| (0..l).map(|_| (rng.random_range(0.0..32.0), rng.random_range(0.0..32.0))).collect()).collect();
        let geom = HeatmapGeometry::new(32, hm);
        prop_assert_eq!(pck(&maps, &gt, 0.2, geom).unwrap(), pck(&rescaled, &gt, 0.2, geom).unwrap());
    }
}

#[test]
fn more_stacks_mean_more_parameters() {
    let spec = HourglassSpec::new(2, 16, 5, 64);
    let counts: Vec<usize> = (1..=4).map(|s| build_pose_model(&spec, 1, s, true).unwrap().param_count()).collect();
    assert!(counts.windows(2).all(|p| p[0] < p[1]), "{counts:?}");
}

#[test]
fn built_graphs_type_check() {
    for depth in 1..=3 {
        for stacks in 1..=3 {
            let g = build_pose_model(&HourglassSpec::new(depth, 8, 5, 32), 1, stacks, true).unwrap();
            let shapes = g.infer_shapes().unwrap();
            for out in g.outputs() {
                assert_eq!(shapes[out], vec![5, 32, 32]);
            }
        }
    }
}
