//! `edgesense` experiment runner.
//!
//! Every subcommand writes CSV (or plain-text model) artifacts into the
//! `--out` directory. Settings come from flags, then the `--config` file,
//! then built-in defaults.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "edgesense",
    version,
    about = "Sensor scheduling and open-world classification experiments"
)]
pub struct Cli {
    /// Flat key=value settings file; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a ground-truth event trace.
    GenTrace(GenTraceArgs),
    /// Train or update a Q-learning scheduler.
    TrainQlbs(TrainArgs),
    /// Simulate one policy.
    Simulate(SimulateArgs),
    /// Simulate several policies on the same trace.
    Compare(CompareArgs),
    /// Run the incremental open-world experiment.
    Openworld(OpenWorldArgs),
    /// Replay idle-time classifier updates on a trace.
    UpdateExp(UpdateArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProfileName {
    Kitchen,
}

#[derive(Args, Debug, Clone)]
pub struct TraceArgs {
    /// Read the trace from a CSV file instead of generating one.
    #[arg(long)]
    pub trace: Option<PathBuf>,

    /// Trace length in seconds when generating.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub length: Option<u64>,

    #[arg(long, value_enum, default_value_t = ProfileName::Kitchen)]
    pub profile: ProfileName,

    /// Latency constraint in seconds applied to every class.
    #[arg(long)]
    pub cl: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct GenTraceArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub length: Option<u64>,

    #[arg(long, value_enum, default_value_t = ProfileName::Kitchen)]
    pub profile: ProfileName,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeArg {
    Full,
    Update,
}

#[derive(Args, Debug, Clone, Default)]
pub struct QlbsArgs {
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Reward/penalty for the boundary criterion, e.g. `10/50`.
    #[arg(long)]
    pub cr1: Option<String>,
    /// Reward/penalty for the non-decreasing period criterion, e.g. `1/5`.
    #[arg(long)]
    pub cr2: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    #[command(flatten)]
    pub trace: TraceArgs,
    #[command(flatten)]
    pub qlbs: QlbsArgs,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub n_success: Option<usize>,
    /// Existing Q-table to start from.
    #[arg(long)]
    pub init: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClassifierArg {
    Oracle,
    Openworld,
}

#[derive(Args, Debug, Clone)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub trace: TraceArgs,
    #[command(flatten)]
    pub qlbs: QlbsArgs,
    /// One of `fixed`, `fixed:<seconds>`, `min`, `clpa`, `qlbs`.
    #[arg(long, default_value = "clpa")]
    pub policy: String,
    /// Trained Q-table for the `qlbs` policy; trained on the trace if absent.
    #[arg(long)]
    pub qtable: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ClassifierArg::Oracle)]
    pub classifier: ClassifierArg,
}

#[derive(Args, Debug, Clone)]
pub struct CompareArgs {
    #[command(flatten)]
    pub trace: TraceArgs,
    #[command(flatten)]
    pub qlbs: QlbsArgs,
    #[arg(long, default_value = "fixed,min,clpa,qlbs", value_delimiter = ',')]
    pub policies: Vec<String>,
    #[arg(long)]
    pub qtable: Option<PathBuf>,
    /// Worker threads for independent policy runs.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct OpenWorldArgs {
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub known: Option<usize>,
    #[arg(long)]
    pub increments: Option<usize>,
    #[arg(long)]
    pub per_increment: Option<usize>,
    #[arg(long)]
    pub train_per_class: Option<usize>,
    #[arg(long)]
    pub test_per_class: Option<usize>,
    #[arg(long)]
    pub tail_size: Option<usize>,
    #[arg(long)]
    pub cover_threshold: Option<f64>,
    #[arg(long)]
    pub distance_multiplier: Option<f64>,
    #[arg(long)]
    pub rejection_threshold: Option<f64>,
    #[arg(long)]
    pub min_samples: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct UpdateArgs {
    #[command(flatten)]
    pub trace: TraceArgs,
    /// Class whose samples fill the unknown queue.
    #[arg(long)]
    pub class: Option<u16>,
    /// Samples in the unknown queue.
    #[arg(long)]
    pub queue: Option<usize>,
    /// Sleep period forced on the queued class.
    #[arg(long)]
    pub period: Option<usize>,
    /// Simulated training cost per sample in seconds.
    #[arg(long)]
    pub cost_per_sample: Option<f64>,
    /// Measure the per-sample cost instead (output then depends on the host).
    #[arg(long)]
    pub calibrate: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
