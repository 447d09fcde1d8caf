//! The `sepforge` command line: file-driven experiments on top of
//! `sepforge-core`.

pub mod commands;
pub mod config;

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sepforge_core::HeadMode;

/// A problem with the invocation or the configuration, as opposed to a
/// failure while running (exit code 1 rather than 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// 1 for usage and configuration errors, 2 for everything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let usage = err.chain().any(|e| {
        e.is::<UsageError>()
            || e.is::<clap::Error>()
            || matches!(
                e.downcast_ref::<sepforge_core::Error>(),
                Some(sepforge_core::Error::Config(_))
            )
    });
    if usage {
        1
    } else {
        2
    }
}

#[derive(Debug, Parser)]
#[command(name = "sepforge", version, about = "Time-domain speech separation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate train/val/test splits (and optional sparse subsets).
    Synth(SynthArgs),
    /// Train a model; writes checkpoints, metrics.csv and config.toml.
    Train(TrainArgs),
    /// Score a checkpoint on a manifest.
    Eval(EvalArgs),
    /// SI-SDRi of every early-exit depth of a checkpoint.
    ProbeLayers(ProbeArgs),
    /// Train two configs on the same data and seed and merge their curves.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dataset directory; defaults to `data.dir` of the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write into a non-empty directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum HeadArg {
    Masking,
    Mapping,
}

impl From<HeadArg> for HeadMode {
    fn from(h: HeadArg) -> Self {
        match h {
            HeadArg::Masking => HeadMode::Masking,
            HeadArg::Mapping => HeadMode::Mapping,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub hct: Option<Switch>,
    #[arg(long, value_enum)]
    pub head: Option<HeadArg>,
    /// Overwrite outputs in a non-empty directory.
    #[arg(long, conflicts_with = "resume")]
    pub force: bool,
    /// Continue from `last.ckpt` in the output directory.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Estimates {
    /// Separate with the checkpoint.
    Model,
    /// Use the reference sources themselves (upper bound).
    Oracle,
    /// Use the mixture for every source (zero improvement).
    Mixture,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Required with `--estimates model`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "model")]
    pub estimates: Estimates,
    /// Number of separator blocks to run; all of them by default.
    #[arg(long)]
    pub early_break: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Exactly two experiment configs.
    #[arg(long, num_args = 1, required = true)]
    pub config: Vec<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Validation SI-SDRi (dB) used for epochs-to-threshold.
    #[arg(long, default_value_t = 5.0)]
    pub threshold: f64,
    #[arg(long)]
    pub force: bool,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth(a) => commands::synth::run(&a),
        Command::Train(a) => commands::train::run(&a).map(|_| ()),
        Command::Eval(a) => commands::eval::run(&a),
        Command::ProbeLayers(a) => commands::eval::probe(&a),
        Command::Compare(a) => commands::compare::run(&a),
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run_from<I, T>(args: I) -> anyhow::Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run(Cli::try_parse_from(args)?)
}
