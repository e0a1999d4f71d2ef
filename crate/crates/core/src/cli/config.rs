//! `key = value` run configuration with a canonical, fully resolved form.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Int,
    Float,
    Bool,
    Text,
    Choice(&'static [&'static str]),
}

/// One recognised configuration key.
#[derive(Debug, Clone, Copy)]
pub struct KeySpec {
    pub key: &'static str,
    pub default: &'static str,
    pub help: &'static str,
    kind: Kind,
}

const fn key(key: &'static str, default: &'static str, kind: Kind, help: &'static str) -> KeySpec {
    KeySpec { key, default, help, kind }
}

pub const PRESETS: &[&str] = &["auto", "desk", "tiny", "alexnet_like", "resnet18_like"];

/// Every key the tools accept, in canonical order.
pub const KEYS: &[KeySpec] = &[
    key("aug.enabled", "false", Kind::Bool, "flip/scale/rotation jitter of pose training samples"),
    key("data.image_size", "64", Kind::Int, "pose image side; heatmaps are a quarter of it"),
    key("data.landmarks", "5", Kind::Int, "pose landmarks per figure (1 to 5)"),
    key("data.seed", "1000", Kind::Int, "seed of the synthetic training set; validation uses seed + 1"),
    key("data.sigma", "1", Kind::Float, "heatmap Gaussian sigma in heatmap pixels"),
    key("data.source", "synth", Kind::Choice(&["synth", "idx"]), "synthetic data, or IDX archives (classify only)"),
    key("data.train_images", "", Kind::Text, "IDX image archive for training"),
    key("data.train_labels", "", Kind::Text, "IDX label archive for training"),
    key("data.train_samples", "256", Kind::Int, "synthetic training samples"),
    key("data.val_images", "", Kind::Text, "IDX image archive for validation"),
    key("data.val_labels", "", Kind::Text, "IDX label archive for validation"),
    key("data.val_samples", "64", Kind::Int, "synthetic validation samples"),
    key("distill.gt_weight", "0.25", Kind::Float, "weight of the ground-truth term; the teacher term gets the rest"),
    key("distill.match_features", "false", Kind::Bool, "add the feature-matching term"),
    key("eval.batch", "32", Kind::Int, "evaluation batch size"),
    key("eval.pck_threshold", "0.1", Kind::Float, "PCK distance threshold as a fraction of the figure diagonal"),
    key("io.checkpoint", "model.bnck", Kind::Text, "checkpoint written by train and distill"),
    key("io.metrics", "metrics.csv", Kind::Text, "metrics CSV (empty disables)"),
    key("model.act", "prelu", Kind::Text, "relu, prelu, leaky or leaky:<slope>"),
    key("model.binarize_joins", "true", Kind::Bool, "binarize the 1x1 convolutions joining stacks"),
    key("model.classes", "10", Kind::Int, "classifier outputs"),
    key("model.depth", "2", Kind::Int, "hourglass depth"),
    key("model.prelu_per_channel", "true", Kind::Bool, "one PReLU slope per channel instead of one per layer"),
    key("model.preset", "auto", Kind::Choice(PRESETS), "desk (pose), tiny, alexnet_like or resnet18_like; auto picks by task"),
    key("model.stacks", "1", Kind::Int, "stacked hourglasses"),
    key("model.width", "16", Kind::Int, "hourglass channel width"),
    key("model.width_factor", "1", Kind::Float, "classifier channel multiplier"),
    key("quant.hard_threshold", "65536", Kind::Float, "sharpness from which evaluation uses hard features"),
    key("quant.kind", "tanh", Kind::Choice(&["sigmoid", "softsign", "tanh", "hard"]), "feature approximator; hard binarizes abruptly"),
    key("quant.lambda_end", "65536", Kind::Float, "final sharpness"),
    key("quant.lambda_start", "1", Kind::Float, "initial sharpness"),
    key("quant.stages", "17", Kind::Int, "geometric sharpness stages"),
    key("task", "pose", Kind::Choice(&["pose", "classify"]), "pose heatmaps or classification"),
    key("train.batch", "4", Kind::Int, "training batch size (at least 2)"),
    key("train.epochs", "20", Kind::Int, "training epochs"),
    key("train.init", "reverse", Kind::Choice(&["reverse", "standard", "real"]), "phase order"),
    key("train.lr", "0.002", Kind::Float, "base learning rate"),
    key("train.lr_drop_every", "1000", Kind::Int, "epochs between learning-rate drops"),
    key("train.lr_drop_factor", "0.1", Kind::Float, "learning-rate drop factor"),
    key("train.optimizer", "rmsprop", Kind::Choice(&["rmsprop", "adam"]), "optimizer"),
    key("train.phase_a_frac", "0.6", Kind::Float, "fraction of epochs before weights are binarized"),
    key("train.recipe", "custom", Kind::Choice(&["custom", "pose", "imagenet_like"]), "named schedule overriding the lr and optimizer keys"),
    key("train.seed", "1", Kind::Int, "initialization, shuffling and augmentation seed"),
];

pub fn key_spec(name: &str) -> Option<&'static KeySpec> {
    KEYS.iter().find(|k| k.key == name)
}

fn normalize(spec: &KeySpec, value: &str) -> Result<String> {
    let bad = |what: &str| Error::Config(format!("key '{}': {what} '{value}'", spec.key));
    Ok(match spec.kind {
        Kind::Int => value.parse::<u64>().map_err(|_| bad("expected a non-negative integer, got"))?.to_string(),
        Kind::Float => {
            let v: f64 = value.parse().map_err(|_| bad("expected a number, got"))?;
            if !v.is_finite() {
                return Err(bad("expected a finite number, got"));
            }
            v.to_string()
        }
        Kind::Bool => match value {
            "true" | "1" | "yes" => "true".into(),
            "false" | "0" | "no" => "false".into(),
            _ => return Err(bad("expected true or false, got")),
        },
        Kind::Text => value.to_string(),
        Kind::Choice(options) if options.contains(&value) => value.to_string(),
        Kind::Choice(options) => return Err(bad(&format!("expected one of {}, got", options.join("|")))),
    })
}

/// A complete assignment of every key in [`KEYS`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { values: KEYS.iter().map(|k| (k.key, k.default.to_string())).collect() }
    }
}

impl RunConfig {
    /// Sets one key. Unknown keys and ill-typed values are config errors
    /// naming the key.
    pub fn set(&mut self, name: &str, value: &str) -> Result<()> {
        let spec = key_spec(name).ok_or_else(|| Error::Config(format!("unknown config key '{name}'")))?;
        let v = normalize(spec, value.trim())?;
        self.values.insert(spec.key, v);
        Ok(())
    }

    /// Applies a `key=value` assignment as given on the command line.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair.split_once('=').ok_or_else(|| Error::Config(format!("expected key=value, got '{pair}'")))?;
        self.set(k.trim(), v)
    }

    /// Applies every `key = value` line of `text` on top of `self`. Blank
    /// lines and `#` comments are skipped.
    pub fn merge_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", i + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> &str {
        self.values.get(name).map(String::as_str).unwrap_or_else(|| panic!("config key '{name}' is not declared"))
    }

    pub fn parse<T: FromStr>(&self, name: &str) -> Result<T> {
        self.get(name).parse().map_err(|_| Error::Config(format!("key '{name}': cannot use '{}'", self.get(name))))
    }

    pub fn flag(&self, name: &str) -> bool {
        self.get(name) == "true"
    }

    /// Replaces `auto` choices by what they stand for, so the canonical form
    /// names the model actually built.
    pub fn resolved(&self) -> Result<Self> {
        let mut out = self.clone();
        let task = self.get("task");
        let preset = match (task, self.get("model.preset")) {
            ("pose", "auto") => "desk",
            ("classify", "auto") => "tiny",
            (t, p) => {
                let pose_preset = p == "desk";
                if pose_preset != (t == "pose") {
                    return Err(Error::Config(format!("key 'model.preset': '{p}' does not fit task '{t}'")));
                }
                p
            }
        };
        out.values.insert("model.preset", preset.into());
        Ok(out)
    }

    /// Sorted `key = value` lines covering every key.
    pub fn canonical(&self) -> String {
        self.to_string()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        c.merge_text(text)?;
        Ok(c)
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.values {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

/// Help text listing every key with its default.
pub fn keys_help() -> String {
    let width = KEYS.iter().map(|k| k.key.len() + k.default.len()).max().unwrap_or(0) + 4;
    let mut s = String::from("Config keys (set with --config FILE or --set key=value):\n");
    for k in KEYS {
        let lhs = format!("{} = {}", k.key, if k.default.is_empty() { "\"\"" } else { k.default });
        s.push_str(&format!("  {lhs:<width$} {}\n", k.help));
    }
    s
}
