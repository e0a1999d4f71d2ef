//! The `xnorpose` command line: train, eval, bench, distill and inspect.

mod bench;
mod commands;
mod config;
mod setup;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::error::{Error, Result};

pub use bench::{
    bench_models, cmd_bench, compression_report, lcg_tensor, measure_compression, measure_speed, BenchOptions,
    CompressionRecord, SpeedRecord,
};
pub use commands::{cmd_distill, cmd_eval, cmd_inspect, cmd_train};
pub use config::{key_spec, keys_help, KeySpec, RunConfig, KEYS, PRESETS};
pub use setup::{build_model, hourglass_spec, init_state, load_data, train_config};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) | Error::Format { .. } => EXIT_IO,
        Error::Numeric(_) | Error::NonFinite { .. } | Error::ZeroValue { .. } => EXIT_NUMERIC,
        Error::Config(_) | Error::InvalidArgument(_) | Error::Shape(_) | Error::Graph(_) | Error::Train(_) => EXIT_CONFIG,
    }
}

#[derive(Debug, Parser)]
#[command(name = "xnorpose", version, about = "Binary pose and classification networks")]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

/// Config sources shared by commands that build a run.
#[derive(Debug, Args)]
struct ConfigArgs {
    /// `key = value` file applied over the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Single override, repeatable; applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Shorthand for task=...
    #[arg(long)]
    task: Option<String>,
    /// Shorthand for model.preset=...
    #[arg(long)]
    preset: Option<String>,
    /// Shorthand for train.seed=...
    #[arg(long)]
    seed: Option<String>,
    /// Shorthand for train.init=...
    #[arg(long)]
    init: Option<String>,
    /// Shorthand for train.epochs=...
    #[arg(long)]
    epochs: Option<String>,
    /// Shorthand for io.checkpoint=...
    #[arg(long)]
    out: Option<String>,
    /// Shorthand for io.metrics=...
    #[arg(long)]
    metrics: Option<String>,
}

impl ConfigArgs {
    fn apply(&self, mut cfg: RunConfig) -> Result<RunConfig> {
        if let Some(path) = &self.config {
            cfg.merge_text(&std::fs::read_to_string(path)?)?;
        }
        for pair in &self.set {
            cfg.set_pair(pair)?;
        }
        let shorthands = [
            ("task", &self.task),
            ("model.preset", &self.preset),
            ("train.seed", &self.seed),
            ("train.init", &self.init),
            ("train.epochs", &self.epochs),
            ("io.checkpoint", &self.out),
            ("io.metrics", &self.metrics),
        ];
        for (key, value) in shorthands {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.resolved()
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and write a checkpoint plus a metrics CSV.
    Train(ConfigArgs),
    /// Evaluate a checkpoint on the validation data its config names.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Overrides applied to the checkpoint's embedded config.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Measure packed storage and XNOR kernel speed; prints JSON lines.
    Bench {
        /// Timing repetitions; the fastest is reported.
        #[arg(long, default_value_t = 3)]
        reps: usize,
    },
    /// Train a student against a teacher checkpoint's outputs.
    Distill {
        #[arg(long)]
        teacher: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Summarize a checkpoint and print weight histograms.
    Inspect {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 16)]
        bins: usize,
        /// Also print the layer graph text.
        #[arg(long)]
        graph: bool,
    },
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Train(args) => cmd_train(&args.apply(RunConfig::default())?, None, out),
        Command::Eval { checkpoint, set } => cmd_eval(&checkpoint, &set, out),
        Command::Bench { reps } => cmd_bench(&BenchOptions { reps: reps.max(1), ..BenchOptions::default() }, out),
        Command::Distill { teacher, config } => cmd_distill(&teacher, &config.apply(RunConfig::default())?, out),
        Command::Inspect { checkpoint, bins, graph } => cmd_inspect(&checkpoint, bins, graph, out),
    }
}

/// Runs the CLI on `args` and returns the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let keys = keys_help();
    let command = Cli::command()
        .after_help(keys.clone())
        .mut_subcommand("train", |c| c.after_help(keys.clone()))
        .mut_subcommand("distill", |c| c.after_help(keys.clone()));
    let matches = match command.try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return EXIT_CONFIG;
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match dispatch(cli, &mut out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = out.flush();
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
