//! Executes a [`LayerGraph`] with owned parameters: forward passes record a
//! tape, backward passes consume it.

use std::borrow::Cow;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::bitcore::DenseTensor;
use crate::error::{Error, Result};
use crate::layers::{
    activation, activation_backward, batchnorm, batchnorm_backward, conv2d_binary, conv2d_binary_backward, conv2d_real,
    conv2d_real_backward, global_avg_pool, global_avg_pool_backward, linear, linear_backward, maxpool2d,
    maxpool2d_backward, sigmoid, sigmoid_backward, upsample_nearest, upsample_nearest_backward, Activation,
    BatchNormCache, BinaryConvCache, FeatureMode, LayerParams, ParamKind, WeightMode, BN_EPS, BN_MOMENTUM, PRELU_INIT,
};
use crate::models::{LayerGraph, NodeId, Op};
use crate::real::Real;

/// How binary layers run during one pass. Real layers ignore it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExecMode {
    pub features: FeatureMode,
    pub weights: WeightMode,
    /// Batch statistics in batchnorm (and running-stat updates on the tape).
    pub training: bool,
    /// Use packed XNOR kernels when both paths are hard.
    pub bit_kernels: bool,
    /// Binary-layer inputs closer to zero than this are pushed out to it,
    /// keeping their sign, before binarization. Zero leaves them alone.
    pub feature_margin: f64,
}

impl ExecMode {
    pub fn real(training: bool) -> Self {
        ExecMode { features: FeatureMode::Real, weights: WeightMode::Real, training, bit_kernels: false, feature_margin: 0.0 }
    }

    pub fn binary(training: bool) -> Self {
        ExecMode { features: FeatureMode::Hard, weights: WeightMode::Binary, training, bit_kernels: !training, feature_margin: 0.0 }
    }
}

fn push_out<T: Real>(x: &DenseTensor<T>, margin: f64) -> Cow<'_, DenseTensor<T>> {
    if margin <= 0.0 {
        return Cow::Borrowed(x);
    }
    let m = T::of(margin);
    Cow::Owned(x.map(|v| if v.abs() >= m { v } else if v < T::zero() { -m } else { m }))
}

/// Zeroes the gradient where [`push_out`] replaced the input by a constant.
fn mask_inside<T: Real>(dx: DenseTensor<T>, x: &DenseTensor<T>, margin: f64) -> Result<DenseTensor<T>> {
    if margin <= 0.0 {
        return Ok(dx);
    }
    let m = T::of(margin);
    dx.zip_map(x, |g, v| if v.abs() >= m { g } else { T::zero() })
}

#[derive(Debug)]
enum Cache<T> {
    None,
    Binary(BinaryConvCache<T>),
    Norm(BatchNormCache<T>),
    Pool(Vec<usize>),
}

/// One executed node.
#[derive(Debug)]
pub struct TapeNode<T> {
    pub layer: NodeId,
    /// Feature and weight treatment, present on binary layers only.
    pub binary_mode: Option<(FeatureMode, WeightMode)>,
    margin: f64,
    cache: Cache<T>,
}

/// Record of a forward pass.
#[derive(Debug)]
pub struct Tape<T> {
    values: Vec<DenseTensor<T>>,
    nodes: Vec<TapeNode<T>>,
    running: Vec<(NodeId, Vec<T>, Vec<T>)>,
}

impl<T: Real> Tape<T> {
    pub fn value(&self, id: NodeId) -> &DenseTensor<T> {
        &self.values[id]
    }

    pub fn nodes(&self) -> &[TapeNode<T>] {
        &self.nodes
    }

    /// Values of the output nodes, in graph order.
    pub fn outputs<'a>(&'a self, graph: &LayerGraph) -> Vec<&'a DenseTensor<T>> {
        graph.outputs().into_iter().map(|i| &self.values[i]).collect()
    }
}

/// Gradients of every trainable tensor, plus the network input.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub params: Vec<LayerParams<T>>,
    pub input: Option<DenseTensor<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T = f32> {
    graph: LayerGraph,
    params: Vec<LayerParams<T>>,
}

/// Heads feeding a sigmoid start near this probability, with shrunken
/// weights, so early predictions are not saturated.
pub const HEAD_PRIOR: f64 = 0.02;
const HEAD_WEIGHT_SCALE: f64 = 0.1;

fn kaiming<T: Real>(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> DenseTensor<T> {
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
    DenseTensor::from_fn(shape, |_| T::of(normal.sample(rng)))
}

impl<T: Real> Network<T> {
    /// Fresh parameters: Kaiming-normal weights, zero biases, identity
    /// batchnorm and PReLU slopes of 0.25. Binary layer weights start inside
    /// [−1, 1]; heatmap heads start small and biased towards [`HEAD_PRIOR`].
    pub fn init(graph: LayerGraph, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let feeds_sigmoid: Vec<bool> = (0..graph.len())
            .map(|i| graph.nodes().iter().any(|n| n.op == Op::Sigmoid && n.inputs.contains(&i)))
            .collect();
        let params = graph
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, node)| {
                let mut p = LayerParams::default();
                match node.op {
                    Op::Conv { c_in, c_out, k, bias, .. } if feeds_sigmoid[i] => {
                        let w: DenseTensor<T> = kaiming(&mut rng, &[c_out, c_in, k, k], c_in * k * k);
                        p.weights = Some(w.map(|v| v * T::of(HEAD_WEIGHT_SCALE)));
                        let prior = T::of((HEAD_PRIOR / (1.0 - HEAD_PRIOR)).ln());
                        p.bias = bias.then(|| DenseTensor::filled(&[c_out], prior));
                    }
                    Op::Conv { c_in, c_out, k, bias, .. } => {
                        p.weights = Some(kaiming(&mut rng, &[c_out, c_in, k, k], c_in * k * k));
                        p.bias = bias.then(|| DenseTensor::zeros(&[c_out]));
                    }
                    Op::BinConv { c_in, c_out, k, .. } => {
                        let w: DenseTensor<T> = kaiming(&mut rng, &[c_out, c_in, k, k], c_in * k * k);
                        p.weights = Some(w.map(|v| v.max(-T::one()).min(T::one())));
                    }
                    Op::Linear { d_in, d_out, bias } => {
                        p.weights = Some(kaiming(&mut rng, &[d_out, d_in], d_in));
                        p.bias = bias.then(|| DenseTensor::zeros(&[d_out]));
                    }
                    Op::BinLinear { d_in, d_out } => {
                        let w: DenseTensor<T> = kaiming(&mut rng, &[d_out, d_in], d_in);
                        p.weights = Some(w.map(|v| v.max(-T::one()).min(T::one())));
                    }
                    Op::BatchNorm { c } => {
                        p.bn_gamma = Some(DenseTensor::filled(&[c], T::one()));
                        p.bn_beta = Some(DenseTensor::zeros(&[c]));
                        p.bn_mean = Some(DenseTensor::zeros(&[c]));
                        p.bn_var = Some(DenseTensor::filled(&[c], T::one()));
                    }
                    Op::Act { kind: Activation::Prelu, slopes } => {
                        p.prelu_slope = Some(DenseTensor::filled(&[slopes], T::of(PRELU_INIT)));
                    }
                    _ => {}
                }
                p
            })
            .collect();
        Network { graph, params }
    }

    /// Pairs a graph with existing parameters, checking every slot's shape.
    pub fn from_parts(graph: LayerGraph, params: Vec<LayerParams<T>>) -> Result<Self> {
        let reference: Network<T> = Network::init(graph.clone(), 0);
        if params.len() != reference.params.len() {
            return Err(Error::shape(format!("{} parameter sets for {} nodes", params.len(), graph.len())));
        }
        for (i, (got, want)) in params.iter().zip(&reference.params).enumerate() {
            for kind in ParamKind::ALL {
                let ok = match (got.slot(kind), want.slot(kind)) {
                    (Some(a), Some(b)) => a.shape() == b.shape(),
                    (None, None) => true,
                    _ => false,
                };
                if !ok {
                    return Err(Error::shape(format!("node '{}': {kind:?} slot mismatch", graph.node(i).name)));
                }
            }
        }
        Ok(Network { graph, params })
    }

    pub fn graph(&self) -> &LayerGraph {
        &self.graph
    }

    pub fn params(&self) -> &[LayerParams<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [LayerParams<T>] {
        &mut self.params
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        Network { graph: self.graph.clone(), params: self.params.iter().map(LayerParams::cast).collect() }
    }

    pub fn forward(&self, input: &DenseTensor<T>, mode: ExecMode) -> Result<Tape<T>> {
        let input_id = self.graph.input_node()?;
        let Op::Input { c, h, w } = self.graph.node(input_id).op else { unreachable!() };
        match input.shape() {
            [_, ci, hi, wi] if (*ci, *hi, *wi) == (c, h, w) => {}
            s => return Err(Error::shape(format!("input {s:?} does not match [N, {c}, {h}, {w}]"))),
        }
        let mut tape = Tape { values: Vec::with_capacity(self.graph.len()), nodes: Vec::new(), running: Vec::new() };
        for (id, node) in self.graph.nodes().iter().enumerate() {
            let p = &self.params[id];
            let arg = |k: usize| &tape.values[node.inputs[k]];
            let mut cache = Cache::None;
            let mut binary_mode = None;
            let out = match node.op {
                Op::Input { .. } => input.clone(),
                Op::Conv { stride, pad, .. } => conv2d_real(arg(0), weights(p)?, p.bias.as_ref(), stride, pad, T::zero())?,
                Op::BinConv { stride, pad, .. } => {
                    binary_mode = Some((mode.features, mode.weights));
                    let x = push_out(arg(0), mode.feature_margin);
                    let (out, c) = conv2d_binary(&x, weights(p)?, mode.features, mode.weights, stride, pad, mode.bit_kernels)?;
                    cache = Cache::Binary(c);
                    out
                }
                Op::BinLinear { d_in, d_out } => {
                    binary_mode = Some((mode.features, mode.weights));
                    let n = arg(0).shape()[0];
                    let x4 = push_out(arg(0), mode.feature_margin).into_owned().reshape(&[n, d_in, 1, 1])?;
                    let w4 = weights(p)?.clone().reshape(&[d_out, d_in, 1, 1])?;
                    let (out, c) = conv2d_binary(&x4, &w4, mode.features, mode.weights, 1, 0, mode.bit_kernels)?;
                    cache = Cache::Binary(c);
                    out.reshape(&[n, d_out])?
                }
                Op::BatchNorm { .. } => {
                    let mut mean = slot(p, ParamKind::BnMean)?.data().to_vec();
                    let mut var = slot(p, ParamKind::BnVar)?.data().to_vec();
                    let (out, c) = batchnorm(
                        arg(0),
                        slot(p, ParamKind::BnGamma)?.data(),
                        slot(p, ParamKind::BnBeta)?.data(),
                        &mut mean,
                        &mut var,
                        mode.training,
                        T::of(BN_MOMENTUM),
                        T::of(BN_EPS),
                    )?;
                    if mode.training {
                        tape.running.push((id, mean, var));
                    }
                    cache = Cache::Norm(c);
                    out
                }
                Op::Act { kind, .. } => activation(arg(0), kind, p.prelu_slope.as_ref().map(|s| s.data()))?,
                Op::MaxPool { k, stride, pad } => {
                    let (out, idx) = maxpool2d(arg(0), k, stride, pad)?;
                    cache = Cache::Pool(idx);
                    out
                }
                Op::Upsample { factor } => upsample_nearest(arg(0), factor)?,
                Op::Add => {
                    let mut acc = arg(0).clone();
                    for k in 1..node.inputs.len() {
                        acc.add_assign(arg(k))?;
                    }
                    acc
                }
                Op::Concat => concat_channels(&node.inputs.iter().map(|&i| &tape.values[i]).collect::<Vec<_>>())?,
                Op::Sigmoid => sigmoid(arg(0)),
                Op::AvgPool => global_avg_pool(arg(0))?,
                Op::Flatten => {
                    let n = arg(0).shape()[0];
                    let d = arg(0).len() / n.max(1);
                    arg(0).clone().reshape(&[n, d])?
                }
                Op::Linear { .. } => linear(arg(0), weights(p)?, p.bias.as_ref())?,
                Op::Output => arg(0).clone(),
            };
            tape.values.push(out);
            tape.nodes.push(TapeNode { layer: id, binary_mode, margin: mode.feature_margin, cache });
        }
        Ok(tape)
    }

    /// Output node values of an inference pass, evaluated in chunks of `batch`.
    pub fn predict(&self, input: &DenseTensor<T>, mode: ExecMode, batch: usize) -> Result<Vec<DenseTensor<T>>> {
        let n = input.shape().first().copied().unwrap_or(0);
        let outputs = self.graph.outputs();
        let mut parts: Vec<Vec<T>> = vec![Vec::new(); outputs.len()];
        let mut shapes: Vec<Vec<usize>> = vec![Vec::new(); outputs.len()];
        let mut start = 0;
        while start < n {
            let end = (start + batch.max(1)).min(n);
            let tape = self.forward(&input.batch_slice(start, end)?, ExecMode { training: false, ..mode })?;
            for (k, &o) in outputs.iter().enumerate() {
                parts[k].extend_from_slice(tape.values[o].data());
                shapes[k] = tape.values[o].shape().to_vec();
            }
            start = end;
        }
        parts
            .into_iter()
            .zip(shapes)
            .map(|(data, mut shape)| {
                if shape.is_empty() {
                    return Err(Error::shape("empty input batch"));
                }
                shape[0] = n;
                DenseTensor::new(shape, data)
            })
            .collect()
    }

    /// Folds the batch statistics recorded by a training-mode forward pass
    /// into the running estimates.
    pub fn commit_running_stats(&mut self, tape: &Tape<T>) {
        for (id, mean, var) in &tape.running {
            let p = &mut self.params[*id];
            if let Some(m) = p.bn_mean.as_mut() {
                m.data_mut().copy_from_slice(mean);
            }
            if let Some(v) = p.bn_var.as_mut() {
                v.data_mut().copy_from_slice(var);
            }
        }
    }

    /// Reverse pass. `seeds` are upstream gradients at arbitrary nodes
    /// (usually the outputs); they are summed where they coincide.
    pub fn backward(&self, tape: Tape<T>, seeds: Vec<(NodeId, DenseTensor<T>)>) -> Result<Gradients<T>> {
        let Tape { values, nodes, .. } = tape;
        let mut grads: Vec<Option<DenseTensor<T>>> = vec![None; values.len()];
        for (id, g) in seeds {
            if id >= values.len() {
                return Err(Error::invalid(format!("seed for unknown node {id}")));
            }
            g.expect_same_shape(&values[id])?;
            accumulate(&mut grads[id], g)?;
        }
        let mut pgrads: Vec<LayerParams<T>> = self.params.iter().map(LayerParams::zeros_like_trainable).collect();
        let mut input_grad = None;
        for tn in nodes.into_iter().rev() {
            let id = tn.layer;
            let Some(dout) = grads[id].take() else { continue };
            let node = self.graph.node(id);
            let p = &self.params[id];
            let pg = &mut pgrads[id];
            let x = |k: usize| &values[node.inputs[k]];
            let mut send: Vec<(NodeId, DenseTensor<T>)> = Vec::with_capacity(node.inputs.len());
            match (&node.op, tn.cache) {
                (Op::Input { .. }, _) => input_grad = Some(dout),
                (Op::Conv { stride, pad, .. }, _) => {
                    let g = conv2d_real_backward(x(0), weights(p)?, p.bias.is_some(), &dout, *stride, *pad, T::zero())?;
                    pg.weights = Some(g.dw);
                    pg.bias = g.dbias;
                    send.push((node.inputs[0], g.dx));
                }
                (Op::BinConv { stride, pad, .. }, Cache::Binary(c)) => {
                    let (f, w) = tn.binary_mode.expect("binary node records its mode");
                    let (dx, dw) = conv2d_binary_backward(&push_out(x(0), tn.margin), weights(p)?, c, f, w, &dout, *stride, *pad)?;
                    pg.weights = Some(dw);
                    send.push((node.inputs[0], mask_inside(dx, x(0), tn.margin)?));
                }
                (Op::BinLinear { d_in, d_out }, Cache::Binary(c)) => {
                    let (f, w) = tn.binary_mode.expect("binary node records its mode");
                    let n = x(0).shape()[0];
                    let x4 = push_out(x(0), tn.margin).into_owned().reshape(&[n, *d_in, 1, 1])?;
                    let w4 = weights(p)?.clone().reshape(&[*d_out, *d_in, 1, 1])?;
                    let d4 = dout.reshape(&[n, *d_out, 1, 1])?;
                    let (dx, dw) = conv2d_binary_backward(&x4, &w4, c, f, w, &d4, 1, 0)?;
                    pg.weights = Some(dw.reshape(&[*d_out, *d_in])?);
                    send.push((node.inputs[0], mask_inside(dx.reshape(&[n, *d_in])?, x(0), tn.margin)?));
                }
                (Op::BatchNorm { .. }, Cache::Norm(c)) => {
                    let g = batchnorm_backward(&dout, slot(p, ParamKind::BnGamma)?.data(), &c)?;
                    let cshape = [g.dgamma.len()];
                    pg.bn_gamma = Some(DenseTensor::new(cshape.to_vec(), g.dgamma)?);
                    pg.bn_beta = Some(DenseTensor::new(cshape.to_vec(), g.dbeta)?);
                    send.push((node.inputs[0], g.dx));
                }
                (Op::Act { kind, .. }, _) => {
                    let (dx, ds) = activation_backward(x(0), *kind, p.prelu_slope.as_ref().map(|s| s.data()), &dout)?;
                    if let Some(ds) = ds {
                        pg.prelu_slope = Some(DenseTensor::new(vec![ds.len()], ds)?);
                    }
                    send.push((node.inputs[0], dx));
                }
                (Op::MaxPool { .. }, Cache::Pool(idx)) => {
                    send.push((node.inputs[0], maxpool2d_backward(&dout, &idx, x(0).shape())?));
                }
                (Op::Upsample { factor }, _) => send.push((node.inputs[0], upsample_nearest_backward(&dout, *factor)?)),
                (Op::Add, _) => {
                    for &i in &node.inputs {
                        send.push((i, dout.clone()));
                    }
                }
                (Op::Concat, _) => {
                    let widths: Vec<usize> = node.inputs.iter().map(|&i| values[i].shape()[1]).collect();
                    for (i, g) in node.inputs.iter().zip(split_channels(&dout, &widths)?) {
                        send.push((*i, g));
                    }
                }
                (Op::Sigmoid, _) => send.push((node.inputs[0], sigmoid_backward(&values[id], &dout)?)),
                (Op::AvgPool, _) => send.push((node.inputs[0], global_avg_pool_backward(&dout, x(0).shape())?)),
                (Op::Flatten, _) => send.push((node.inputs[0], dout.reshape(x(0).shape())?)),
                (Op::Linear { .. }, _) => {
                    let g = linear_backward(x(0), weights(p)?, p.bias.is_some(), &dout)?;
                    pg.weights = Some(g.dw);
                    pg.bias = g.dbias;
                    send.push((node.inputs[0], g.dx));
                }
                (Op::Output, _) => send.push((node.inputs[0], dout)),
                (op, _) => return Err(Error::invalid(format!("tape cache missing for {op}"))),
            }
            for (i, g) in send {
                accumulate(&mut grads[i], g)?;
            }
        }
        Ok(Gradients { params: pgrads, input: input_grad })
    }
}

fn weights<T: Real>(p: &LayerParams<T>) -> Result<&DenseTensor<T>> {
    slot(p, ParamKind::Weights)
}

fn slot<T: Real>(p: &LayerParams<T>, kind: ParamKind) -> Result<&DenseTensor<T>> {
    p.slot(kind).ok_or_else(|| Error::invalid(format!("missing {kind:?} parameters")))
}

fn accumulate<T: Real>(dst: &mut Option<DenseTensor<T>>, g: DenseTensor<T>) -> Result<()> {
    match dst {
        Some(acc) => acc.add_assign(&g),
        None => {
            *dst = Some(g);
            Ok(())
        }
    }
}

/// Concatenates `[N, C_i, H, W]` tensors along the channel axis.
pub fn concat_channels<T: Real>(parts: &[&DenseTensor<T>]) -> Result<DenseTensor<T>> {
    let (n, _, h, w) = parts.first().ok_or_else(|| Error::invalid("nothing to concatenate"))?.dims4()?;
    let mut c_total = 0;
    for p in parts {
        let (pn, pc, ph, pw) = p.dims4()?;
        if (pn, ph, pw) != (n, h, w) {
            return Err(Error::shape("concat shape mismatch"));
        }
        c_total += pc;
    }
    let mut out = Vec::with_capacity(n * c_total * h * w);
    for b in 0..n {
        for p in parts {
            let block = p.len() / n;
            out.extend_from_slice(&p.data()[b * block..][..block]);
        }
    }
    DenseTensor::new(vec![n, c_total, h, w], out)
}

/// Inverse of [`concat_channels`].
pub fn split_channels<T: Real>(x: &DenseTensor<T>, widths: &[usize]) -> Result<Vec<DenseTensor<T>>> {
    let (n, c, h, w) = x.dims4()?;
    if widths.iter().sum::<usize>() != c {
        return Err(Error::shape("split widths do not sum to the channel count"));
    }
    let plane = h * w;
    let mut outs: Vec<Vec<T>> = widths.iter().map(|&wc| Vec::with_capacity(n * wc * plane)).collect();
    for b in 0..n {
        let mut off = b * c * plane;
        for (o, &wc) in outs.iter_mut().zip(widths) {
            o.extend_from_slice(&x.data()[off..off + wc * plane]);
            off += wc * plane;
        }
    }
    outs.into_iter().zip(widths).map(|(d, &wc)| DenseTensor::new(vec![n, wc, h, w], d)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binarize::{ApproxKind, ApproxSpec};
    use crate::models::{build_pose_model, HourglassSpec};

    fn tiny_pose() -> LayerGraph {
        build_pose_model(&HourglassSpec::new(1, 8, 2, 4), 1, 2, true).unwrap()
    }

    fn input(n: usize, side: usize, seed: u64) -> DenseTensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        DenseTensor::from_fn(&[n, 1, side, side], |_| normal.sample(&mut rng))
    }

    #[test]
    fn concat_split_round_trip() {
        let a = DenseTensor::from_fn(&[2, 1, 2, 2], |i| i as f64);
        let b = DenseTensor::from_fn(&[2, 3, 2, 2], |i| -(i as f64));
        let cat = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(cat.shape(), &[2, 4, 2, 2]);
        let parts = split_channels(&cat, &[1, 3]).unwrap();
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }

    #[test]
    fn forward_records_modes() {
        let net: Network<f64> = Network::init(tiny_pose(), 3);
        let spec = ApproxSpec::new(ApproxKind::Tanh, 4.0).unwrap();
        let mode = ExecMode { features: FeatureMode::Smooth(spec), weights: WeightMode::Real, training: true, bit_kernels: false, feature_margin: 0.0 };
        let tape = net.forward(&input(2, 16, 1), mode).unwrap();
        let binary: Vec<_> = tape.nodes().iter().filter_map(|n| n.binary_mode).collect();
        assert!(!binary.is_empty());
        assert!(binary.iter().all(|&(f, w)| f == FeatureMode::Smooth(spec) && w == WeightMode::Real));
        assert_eq!(tape.outputs(net.graph()).len(), 2);
    }

    #[test]
    fn running_stats_only_change_on_commit() {
        let mut net: Network<f64> = Network::init(tiny_pose(), 3);
        let before = net.clone();
        let tape = net.forward(&input(4, 16, 2), ExecMode::real(true)).unwrap();
        assert_eq!(net, before);
        net.commit_running_stats(&tape);
        assert_ne!(net, before);
    }

    #[test]
    fn bit_kernels_match_dense_hard_path() {
        let net: Network<f64> = Network::init(tiny_pose(), 5);
        let x = input(2, 16, 4);
        let dense = ExecMode { bit_kernels: false, ..ExecMode::binary(false) };
        let a = net.predict(&x, dense, 2).unwrap();
        let b = net.predict(&x, ExecMode::binary(false), 2).unwrap();
        for (u, v) in a.iter().zip(&b) {
            let d = u.max_abs_diff(v).unwrap();
            assert!(d < 1e-9, "{d}");
        }
    }

    #[test]
    fn from_parts_checks_shapes() {
        let net: Network<f32> = Network::init(tiny_pose(), 1);
        let mut params = net.params().to_vec();
        assert!(Network::from_parts(net.graph().clone(), params.clone()).is_ok());
        let i = params.iter().position(|p| p.weights.is_some()).unwrap();
        params[i].weights = Some(DenseTensor::zeros(&[1]));
        assert!(Network::from_parts(net.graph().clone(), params).is_err());
    }
}
