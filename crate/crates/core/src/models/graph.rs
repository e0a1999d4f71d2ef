//! Network topology and its canonical text form.
//!
//! One node per line:
//!
//! ```text
//! name: op(key=value,...) <- input, input [binarize=0|1]
//! ```
//!
//! Lines starting with `#` carry graph metadata (`#stacks=N`). Inputs must
//! name earlier nodes, so every parsed graph is acyclic.

use std::collections::HashMap;
use std::fmt;

use crate::bitcore::conv_out_dim;
use crate::error::{Error, Result};
use crate::layers::Activation;

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Input { c: usize, h: usize, w: usize },
    Conv { c_in: usize, c_out: usize, k: usize, stride: usize, pad: usize, bias: bool },
    BinConv { c_in: usize, c_out: usize, k: usize, stride: usize, pad: usize },
    BatchNorm { c: usize },
    /// `slopes` is the number of PReLU parameters (1 or the channel count); 0 otherwise.
    Act { kind: Activation, slopes: usize },
    MaxPool { k: usize, stride: usize, pad: usize },
    Upsample { factor: usize },
    Add,
    Concat,
    Sigmoid,
    AvgPool,
    Flatten,
    Linear { d_in: usize, d_out: usize, bias: bool },
    BinLinear { d_in: usize, d_out: usize },
    Output,
}

impl Op {
    pub fn is_binary(&self) -> bool {
        matches!(self, Op::BinConv { .. } | Op::BinLinear { .. })
    }

    pub fn has_weights(&self) -> bool {
        matches!(self, Op::Conv { .. } | Op::BinConv { .. } | Op::Linear { .. } | Op::BinLinear { .. })
    }

    /// Learnable scalars (running statistics excluded).
    pub fn param_count(&self) -> usize {
        match *self {
            Op::Conv { c_in, c_out, k, bias, .. } => c_in * c_out * k * k + if bias { c_out } else { 0 },
            Op::BinConv { c_in, c_out, k, .. } => c_in * c_out * k * k,
            Op::BatchNorm { c } => 2 * c,
            Op::Act { slopes, .. } => slopes,
            Op::Linear { d_in, d_out, bias } => d_in * d_out + if bias { d_out } else { 0 },
            Op::BinLinear { d_in, d_out } => d_in * d_out,
            _ => 0,
        }
    }

    /// Shape of the weight tensor, `[out, in, k, k]` for convolutions and
    /// `[out, in]` for linear layers.
    pub fn weight_shape(&self) -> Option<Vec<usize>> {
        match *self {
            Op::Conv { c_in, c_out, k, .. } | Op::BinConv { c_in, c_out, k, .. } => Some(vec![c_out, c_in, k, k]),
            Op::Linear { d_in, d_out, .. } | Op::BinLinear { d_in, d_out } => Some(vec![d_out, d_in]),
            _ => None,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Op::Input { .. } => "input",
            Op::Conv { .. } => "conv",
            Op::BinConv { .. } => "bconv",
            Op::BatchNorm { .. } => "bn",
            Op::Act { .. } => "act",
            Op::MaxPool { .. } => "maxpool",
            Op::Upsample { .. } => "upsample",
            Op::Add => "add",
            Op::Concat => "concat",
            Op::Sigmoid => "sigmoid",
            Op::AvgPool => "avgpool",
            Op::Flatten => "flatten",
            Op::Linear { .. } => "linear",
            Op::BinLinear { .. } => "blinear",
            Op::Output => "output",
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = |v: bool| u8::from(v);
        write!(f, "{}(", self.name())?;
        match self {
            Op::Input { c, h, w } => write!(f, "c={c},h={h},w={w}")?,
            Op::Conv { c_in, c_out, k, stride, pad, bias } => {
                write!(f, "in={c_in},out={c_out},k={k},s={stride},p={pad},bias={}", b(*bias))?
            }
            Op::BinConv { c_in, c_out, k, stride, pad } => write!(f, "in={c_in},out={c_out},k={k},s={stride},p={pad}")?,
            Op::BatchNorm { c } => write!(f, "c={c}")?,
            Op::Act { kind, slopes } => {
                write!(f, "kind={kind}")?;
                if *kind == Activation::Prelu {
                    write!(f, ",slopes={slopes}")?;
                }
            }
            Op::MaxPool { k, stride, pad } => write!(f, "k={k},s={stride},p={pad}")?,
            Op::Upsample { factor } => write!(f, "factor={factor}")?,
            Op::Linear { d_in, d_out, bias } => write!(f, "in={d_in},out={d_out},bias={}", b(*bias))?,
            Op::BinLinear { d_in, d_out } => write!(f, "in={d_in},out={d_out}")?,
            Op::Add | Op::Concat | Op::Sigmoid | Op::AvgPool | Op::Flatten | Op::Output => {}
        }
        f.write_str(")")
    }
}

struct Args<'a> {
    op: &'a str,
    map: HashMap<&'a str, &'a str>,
}

impl<'a> Args<'a> {
    fn parse(op: &'a str, s: &'a str) -> Result<Self> {
        let mut map = HashMap::new();
        for part in s.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Graph(format!("{op}: argument '{part}' is not key=value")))?;
            if map.insert(k, v).is_some() {
                return Err(Error::Graph(format!("{op}: duplicate argument '{k}'")));
            }
        }
        Ok(Args { op, map })
    }

    fn raw(&mut self, key: &str) -> Result<&'a str> {
        self.map
            .remove(key)
            .ok_or_else(|| Error::Graph(format!("{}: missing argument '{key}'", self.op)))
    }

    fn usize(&mut self, key: &str) -> Result<usize> {
        let v = self.raw(key)?;
        v.parse().map_err(|_| Error::Graph(format!("{}: '{key}={v}' is not an integer", self.op)))
    }

    fn flag(&mut self, key: &str) -> Result<bool> {
        match self.raw(key)? {
            "0" => Ok(false),
            "1" => Ok(true),
            v => Err(Error::Graph(format!("{}: '{key}={v}' must be 0 or 1", self.op))),
        }
    }

    fn finish(self) -> Result<()> {
        match self.map.keys().next() {
            Some(k) => Err(Error::Graph(format!("{}: unknown argument '{k}'", self.op))),
            None => Ok(()),
        }
    }
}

impl std::str::FromStr for Op {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, rest) = s.split_once('(').ok_or_else(|| Error::Graph(format!("malformed op '{s}'")))?;
        let body = rest.strip_suffix(')').ok_or_else(|| Error::Graph(format!("malformed op '{s}'")))?;
        let mut a = Args::parse(name, body)?;
        let op = match name {
            "input" => Op::Input { c: a.usize("c")?, h: a.usize("h")?, w: a.usize("w")? },
            "conv" => Op::Conv {
                c_in: a.usize("in")?,
                c_out: a.usize("out")?,
                k: a.usize("k")?,
                stride: a.usize("s")?,
                pad: a.usize("p")?,
                bias: a.flag("bias")?,
            },
            "bconv" => Op::BinConv {
                c_in: a.usize("in")?,
                c_out: a.usize("out")?,
                k: a.usize("k")?,
                stride: a.usize("s")?,
                pad: a.usize("p")?,
            },
            "bn" => Op::BatchNorm { c: a.usize("c")? },
            "act" => {
                let kind: Activation = a.raw("kind")?.parse()?;
                let slopes = if kind == Activation::Prelu { a.usize("slopes")? } else { 0 };
                Op::Act { kind, slopes }
            }
            "maxpool" => Op::MaxPool { k: a.usize("k")?, stride: a.usize("s")?, pad: a.usize("p")? },
            "upsample" => Op::Upsample { factor: a.usize("factor")? },
            "add" => Op::Add,
            "concat" => Op::Concat,
            "sigmoid" => Op::Sigmoid,
            "avgpool" => Op::AvgPool,
            "flatten" => Op::Flatten,
            "linear" => Op::Linear { d_in: a.usize("in")?, d_out: a.usize("out")?, bias: a.flag("bias")? },
            "blinear" => Op::BinLinear { d_in: a.usize("in")?, d_out: a.usize("out")? },
            "output" => Op::Output,
            other => return Err(Error::Graph(format!("unknown op '{other}'"))),
        };
        a.finish()?;
        Ok(op)
    }
}

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub name: String,
    pub op: Op,
    pub inputs: Vec<NodeId>,
    pub binarize: bool,
}

/// Ordered, acyclic network description.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGraph {
    nodes: Vec<Node>,
    stack_count: usize,
}

impl LayerGraph {
    pub fn new() -> Self {
        LayerGraph { nodes: Vec::new(), stack_count: 1 }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn stack_count(&self) -> usize {
        self.stack_count
    }

    pub fn set_stack_count(&mut self, n: usize) {
        self.stack_count = n.max(1);
    }

    pub fn find(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn input_node(&self) -> Result<NodeId> {
        let mut it = self.nodes.iter().enumerate().filter(|(_, n)| matches!(n.op, Op::Input { .. }));
        match (it.next(), it.next()) {
            (Some((i, _)), None) => Ok(i),
            _ => Err(Error::Graph("graph must have exactly one input node".into())),
        }
    }

    /// Output nodes in declaration order; the last one is the final prediction.
    pub fn outputs(&self) -> Vec<NodeId> {
        self.nodes.iter().enumerate().filter(|(_, n)| n.op == Op::Output).map(|(i, _)| i).collect()
    }

    /// Appends a node and checks that the graph still type-checks.
    pub fn push(&mut self, name: impl Into<String>, op: Op, inputs: &[NodeId]) -> Result<NodeId> {
        let name = name.into();
        validate_name(&name)?;
        if self.find(&name).is_some() {
            return Err(Error::Graph(format!("duplicate node name '{name}'")));
        }
        if let Some(&bad) = inputs.iter().find(|&&i| i >= self.nodes.len()) {
            return Err(Error::Graph(format!("node '{name}' refers to unknown input {bad}")));
        }
        let binarize = op.is_binary();
        self.nodes.push(Node { name, op, inputs: inputs.to_vec(), binarize });
        let shapes = self.infer_shapes();
        if let Err(e) = shapes {
            self.nodes.pop();
            return Err(e);
        }
        Ok(self.nodes.len() - 1)
    }

    pub fn param_count(&self) -> usize {
        self.nodes.iter().map(|n| n.op.param_count()).sum()
    }

    /// Per-sample output shape of every node (`[C, H, W]` or `[F]`).
    pub fn infer_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes: Vec<Vec<usize>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let ins: Vec<&Vec<usize>> = node.inputs.iter().map(|&i| &shapes[i]).collect();
            let shape = infer_one(node, &ins).map_err(|e| Error::Graph(format!("node '{}': {e}", node.name)))?;
            shapes.push(shape);
        }
        Ok(shapes)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("#stacks={}\n", self.stack_count);
        for node in &self.nodes {
            let inputs: Vec<&str> = node.inputs.iter().map(|&i| self.nodes[i].name.as_str()).collect();
            s.push_str(&format!(
                "{}: {} <-{} [binarize={}]\n",
                node.name,
                node.op,
                if inputs.is_empty() { String::new() } else { format!(" {}", inputs.join(", ")) },
                u8::from(node.binarize)
            ));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut g = LayerGraph::new();
        for (lineno, line) in text.lines().enumerate() {
            let ctx = |msg: String| Error::Graph(format!("line {}: {msg}", lineno + 1));
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                if let Some(v) = meta.strip_prefix("stacks=") {
                    let n: usize = v.parse().map_err(|_| ctx(format!("bad stack count '{v}'")))?;
                    if n == 0 {
                        return Err(ctx("stack count must be >= 1".into()));
                    }
                    g.stack_count = n;
                }
                continue;
            }
            let (name, rest) = line.split_once(": ").ok_or_else(|| ctx("missing ': '".into()))?;
            let (op_text, rest) = rest.split_once(" <-").ok_or_else(|| ctx("missing '<-'".into()))?;
            let (inputs_text, flag) = rest.rsplit_once('[').ok_or_else(|| ctx("missing [binarize=..]".into()))?;
            let binarize = match flag {
                "binarize=0]" => false,
                "binarize=1]" => true,
                _ => return Err(ctx(format!("bad flag '[{flag}'"))),
            };
            let op: Op = op_text.parse().map_err(|e| ctx(format!("{e}")))?;
            if op.is_binary() != binarize {
                return Err(ctx(format!("binarize={} contradicts op {op}", u8::from(binarize))));
            }
            let mut inputs = Vec::new();
            for inp in inputs_text.trim().split(", ").filter(|s| !s.is_empty()) {
                let id = g.find(inp).ok_or_else(|| ctx(format!("unknown input '{inp}'")))?;
                inputs.push(id);
            }
            g.push(name, op, &inputs).map_err(|e| ctx(format!("{e}")))?;
        }
        Ok(g)
    }

    /// Copies every node of `other` except its input node, prefixing names and
    /// binding `other`'s input to `bind`. Returns the id map from `other`.
    pub fn inline(&mut self, other: &LayerGraph, prefix: &str, bind: NodeId) -> Result<Vec<NodeId>> {
        let input = other.input_node()?;
        let mut map = vec![usize::MAX; other.len()];
        map[input] = bind;
        for (i, node) in other.nodes.iter().enumerate() {
            if i == input || node.op == Op::Output {
                if node.op == Op::Output {
                    map[i] = map[node.inputs[0]];
                }
                continue;
            }
            let inputs: Vec<NodeId> = node.inputs.iter().map(|&j| map[j]).collect();
            map[i] = self.push(format!("{prefix}{}", node.name), node.op.clone(), &inputs)?;
        }
        Ok(map)
    }
}

impl Default for LayerGraph {
    fn default() -> Self {
        Self::new()
    }
}

fn validate_name(name: &str) -> Result<()> {
    if name.is_empty() || name.starts_with('#') || name.chars().any(|c| c.is_whitespace() || c == ',' || c == ':' || c == '[') {
        return Err(Error::Graph(format!("invalid node name '{name}'")));
    }
    Ok(())
}

fn infer_one(node: &Node, ins: &[&Vec<usize>]) -> Result<Vec<usize>> {
    let arity = |n: usize| -> Result<()> {
        if ins.len() != n {
            return Err(Error::Graph(format!("expects {n} input(s), got {}", ins.len())));
        }
        Ok(())
    };
    let chw = |s: &Vec<usize>| -> Result<(usize, usize, usize)> {
        match s.as_slice() {
            [c, h, w] => Ok((*c, *h, *w)),
            _ => Err(Error::Graph(format!("expects a [C, H, W] input, got {s:?}"))),
        }
    };
    let channels = |s: &Vec<usize>| s[0];
    match &node.op {
        Op::Input { c, h, w } => {
            arity(0)?;
            Ok(vec![*c, *h, *w])
        }
        Op::Conv { c_in, c_out, k, stride, pad, .. } | Op::BinConv { c_in, c_out, k, stride, pad } => {
            arity(1)?;
            let (c, h, w) = chw(ins[0])?;
            if c != *c_in {
                return Err(Error::Graph(format!("expects {c_in} channels, got {c}")));
            }
            Ok(vec![*c_out, conv_out_dim(h, *k, *stride, *pad)?, conv_out_dim(w, *k, *stride, *pad)?])
        }
        Op::BatchNorm { c } => {
            arity(1)?;
            if channels(ins[0]) != *c || !(ins[0].len() == 1 || ins[0].len() == 3) {
                return Err(Error::Graph(format!("expects {c} channels, got {:?}", ins[0])));
            }
            Ok(ins[0].clone())
        }
        Op::Act { kind, slopes } => {
            arity(1)?;
            let ok = match kind {
                Activation::Prelu => *slopes == 1 || *slopes == channels(ins[0]),
                _ => *slopes == 0,
            };
            if !ok {
                return Err(Error::Graph(format!("{slopes} slopes for {:?}", ins[0])));
            }
            Ok(ins[0].clone())
        }
        Op::MaxPool { k, stride, pad } => {
            arity(1)?;
            let (c, h, w) = chw(ins[0])?;
            if *pad >= *k {
                return Err(Error::Graph("pool padding must be smaller than the kernel".into()));
            }
            Ok(vec![c, conv_out_dim(h, *k, *stride, *pad)?, conv_out_dim(w, *k, *stride, *pad)?])
        }
        Op::Upsample { factor } => {
            arity(1)?;
            let (c, h, w) = chw(ins[0])?;
            Ok(vec![c, h * factor, w * factor])
        }
        Op::Add => {
            if ins.len() < 2 || ins.iter().any(|s| s != &ins[0]) {
                return Err(Error::Graph(format!("add needs >= 2 equal shapes, got {ins:?}")));
            }
            Ok(ins[0].clone())
        }
        Op::Concat => {
            if ins.len() < 2 {
                return Err(Error::Graph("concat needs >= 2 inputs".into()));
            }
            let (_, h, w) = chw(ins[0])?;
            let mut c = 0;
            for s in ins {
                let (ci, hi, wi) = chw(s)?;
                if (hi, wi) != (h, w) {
                    return Err(Error::Graph(format!("concat spatial mismatch {ins:?}")));
                }
                c += ci;
            }
            Ok(vec![c, h, w])
        }
        Op::Sigmoid | Op::Output => {
            arity(1)?;
            Ok(ins[0].clone())
        }
        Op::AvgPool => {
            arity(1)?;
            let (c, _, _) = chw(ins[0])?;
            Ok(vec![c])
        }
        Op::Flatten => {
            arity(1)?;
            Ok(vec![ins[0].iter().product()])
        }
        Op::Linear { d_in, d_out, .. } | Op::BinLinear { d_in, d_out } => {
            arity(1)?;
            if ins[0].as_slice() != [*d_in] {
                return Err(Error::Graph(format!("expects [{d_in}], got {:?}", ins[0])));
            }
            Ok(vec![*d_out])
        }
    }
}
