use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::data::random_pck_baseline;
use crate::error::{Error, Result};
use crate::layers::weight_histogram;
use crate::models::LayerGraph;
use crate::train::{evaluate, metric_name, train, Checkpoint, MetricRecord, TaskData, Teacher};

use super::config::RunConfig;
use super::setup::{init_state, load_data, train_config};

fn metrics_writer(path: &str) -> Result<Option<BufWriter<File>>> {
    if path.is_empty() {
        return Ok(None);
    }
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "epoch,split,metric,value")?;
    Ok(Some(w))
}

/// Trains the configured run, optionally against a teacher checkpoint, and
/// writes the checkpoint and metrics named by `io.*`.
pub fn cmd_train(cfg: &RunConfig, teacher: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let cfg = cfg.resolved()?;
    let tc = train_config(&cfg)?;
    let teacher_ck = teacher.map(Checkpoint::load).transpose()?;
    let data = load_data(&cfg)?;
    let mut state = init_state(&cfg)?;
    let teacher = match &teacher_ck {
        Some(ck) => Some(Teacher { net: &ck.state.net, mode: ck.state.inference_mode(tc.quant.hard_threshold)? }),
        None => None,
    };
    let mut metrics = metrics_writer(cfg.get("io.metrics"))?;
    let mut write_err = None;
    let mut sink = |r: &MetricRecord| {
        if let Some(w) = metrics.as_mut() {
            if let Err(e) = writeln!(w, "{r}") {
                write_err.get_or_insert(e);
            }
        }
    };
    let log = train(&mut state, &tc, &data, teacher, &mut sink)?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    if let Some(mut w) = metrics {
        w.flush()?;
    }
    let path = cfg.get("io.checkpoint").to_string();
    Checkpoint { config: cfg.canonical(), state }.save(Path::new(&path))?;
    if let Some(last) = log.last() {
        writeln!(out, "epoch {} {} train_loss {} val_loss {} val_{} {}", last.epoch, last.phase, last.train_loss, last.val_loss, metric_name(&data), last.val_metric)?;
    }
    writeln!(out, "checkpoint {path}")?;
    Ok(())
}

/// [`cmd_train`] with a mandatory teacher.
pub fn cmd_distill(teacher: &Path, cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    cmd_train(cfg, Some(teacher), out)
}

/// Prints `split,metric,value` lines for the checkpoint's validation data.
pub fn cmd_eval(checkpoint: &Path, overrides: &[String], out: &mut dyn Write) -> Result<()> {
    let ck = Checkpoint::load(checkpoint)?;
    let mut cfg = RunConfig::from_text(&ck.config)?;
    for pair in overrides {
        cfg.set_pair(pair)?;
    }
    let cfg = cfg.resolved()?;
    let tc = train_config(&cfg)?;
    let data = load_data(&cfg)?;
    let (loss, metric) = evaluate(&ck.state.net, ck.state.inference_mode(tc.quant.hard_threshold)?, &data, tc.eval_batch, tc.pck_threshold)?;
    writeln!(out, "val,loss,{loss}")?;
    writeln!(out, "val,{},{metric}", metric_name(&data))?;
    if let TaskData::Pose { val, .. } = &data {
        let hm = val.heatmap_size();
        let base = random_pck_baseline(&val.landmarks, tc.pck_threshold, val.geometry, hm, hm)?;
        writeln!(out, "val,pck_random_baseline,{base}")?;
    }
    Ok(())
}

/// Human-readable summary plus one weight histogram per weighted layer.
pub fn cmd_inspect(checkpoint: &Path, bins: usize, show_graph: bool, out: &mut dyn Write) -> Result<()> {
    let ck = Checkpoint::load(checkpoint)?;
    let s = &ck.state;
    writeln!(out, "config:")?;
    for line in ck.config.lines() {
        writeln!(out, "  {line}")?;
    }
    let graph = s.net.graph();
    writeln!(out, "epoch {}", s.epoch)?;
    writeln!(out, "step {}", s.step)?;
    writeln!(out, "phase {}", s.phase)?;
    writeln!(out, "lambda {}", s.lambda)?;
    writeln!(out, "optimizer {} step {}", s.optim.kind, s.optim.step)?;
    writeln!(out, "nodes {} stacks {}", graph.len(), graph.stack_count())?;
    writeln!(out, "parameters {}", graph.param_count())?;
    let mut hist_total = 0;
    let mut weight_total = 0;
    for (node, p) in graph.nodes().iter().zip(s.net.params()) {
        let Some(w) = &p.weights else { continue };
        let h = weight_histogram(w.data(), bins);
        hist_total += h.total();
        weight_total += w.len();
        let counts: Vec<String> = h.counts.iter().map(usize::to_string).collect();
        writeln!(out, "layer {} binary={} weights={} min={} max={}", node.name, node.binarize, w.len(), h.min, h.max)?;
        writeln!(out, "  hist {}", counts.join(" "))?;
    }
    writeln!(out, "histogram_total {hist_total}")?;
    writeln!(out, "weight_count {weight_total}")?;
    let text = graph.to_text();
    if LayerGraph::from_text(&text)?.to_text() != text {
        return Err(Error::Graph("graph text does not round-trip".into()));
    }
    writeln!(out, "graph_roundtrip ok")?;
    if show_graph {
        write!(out, "{text}")?;
    }
    Ok(())
}
