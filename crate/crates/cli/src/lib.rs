//! The `gaitfield` command line: synthetic data, field transform, information metrics,
//! architecture search, retraining, evaluation and gradient checks.

// `!(x <= y)`-style comparisons deliberately treat NaN as out of range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
pub mod config_help;
mod error;
mod fsutil;
mod inputs;
pub mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use error::{CliError, Result};

#[derive(Parser, Debug)]
#[command(
    name = "gaitfield",
    version,
    about = "Signed distance field gait descriptors and cell search"
)]
pub struct Cli {
    /// Print the run configuration schema with defaults and exit.
    #[arg(long)]
    pub help_config: bool,

    /// Worker threads for per-frame transform and metrics work.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a labeled synthetic walker corpus as PGM frames plus manifest.csv.
    Synthesize(SynthesizeArgs),
    /// Convert silhouette sequences to signed dense field files.
    Transform(TransformArgs),
    /// Per-frame entropies of silhouettes and fields, their ratio and GEnI maps.
    Metrics(MetricsArgs),
    /// Search the fusion cell and export the architecture.
    Search(RunArgs),
    /// Retrain a fresh network with the exported discrete architecture.
    Retrain(RunArgs),
    /// Rank-1 identification of probe sequences against a gallery.
    Eval(EvalArgs),
    /// Finite-difference checks of every primitive and candidate operation.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
pub struct SynthesizeArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub identities: usize,
    #[arg(long, default_value_t = 4)]
    pub sequences: usize,
    #[arg(long, default_value_t = 16)]
    pub frames: usize,
    #[arg(long, default_value_t = 16)]
    pub height: usize,
    #[arg(long, default_value_t = 12)]
    pub width: usize,
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    /// 0 is the training corpus; higher streams are held-out recordings of the same walkers.
    #[arg(long, default_value_t = 0)]
    pub stream: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum NormArg {
    PerFrame,
    PerSeq,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DegenerateArg {
    Skip,
    Zero,
    Error,
}

#[derive(Args, Debug)]
pub struct TransformArgs {
    /// Manifest CSV, directory holding manifest.csv, or a directory of PGM frames.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "per-frame")]
    pub norm: NormArg,
    #[arg(long, value_enum, default_value = "zero")]
    pub degenerate: DegenerateArg,
    /// Also write 8-bit PGM previews of every field frame.
    #[arg(long)]
    pub preview: bool,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    /// Silhouette input, resolved like `transform --in`.
    #[arg(long)]
    pub sil: PathBuf,
    /// Output directory of `transform`.
    #[arg(long)]
    pub dstf: PathBuf,
    #[arg(long, default_value_t = 256)]
    pub bins: usize,
    /// Per-frame CSV; GEnI maps are written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Run configuration (TOML); documented defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `search.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Architecture export to retrain (default: the run directory's architecture.toml).
    #[arg(long)]
    pub arch: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Gallery manifest (default: the configured training corpus).
    #[arg(long)]
    pub gallery: Option<PathBuf>,
    /// Probe manifest (default: the configured held-out sequences).
    #[arg(long)]
    pub probe: Option<PathBuf>,
    /// Weights checkpoint (default: the run directory's weights.ckpt).
    #[arg(long)]
    pub weights: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// `all`, a candidate operation name or a primitive name.
    #[arg(long, default_value = "all")]
    pub ops: String,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Perturbs every analytic gradient to exercise the failure path.
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Input("--threads must be ≥ 1".into()));
        }
        // A second global pool cannot be installed; the first one wins.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    if cli.help_config {
        print!("{}", config_help::schema());
        return Ok(());
    }
    match cli.command {
        None => Err(CliError::Input("no command given; see --help".into())),
        Some(Command::Synthesize(a)) => commands::synthesize::run(&a),
        Some(Command::Transform(a)) => commands::transform::run(&a),
        Some(Command::Metrics(a)) => commands::metrics::run(&a),
        Some(Command::Search(a)) => commands::train::search(&a),
        Some(Command::Retrain(a)) => commands::train::retrain(&a),
        Some(Command::Eval(a)) => commands::train::eval(&a),
        Some(Command::Gradcheck(a)) => commands::gradcheck::run(&a),
    }
}

/// Parses the process arguments, runs the command and maps failures to exit codes.
pub fn main_entry() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
