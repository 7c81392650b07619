//! `glop` command-line front end.
//!
//! Machine-readable output goes to stdout (or `--out`) as JSON lines; the
//! human summary goes to stderr. Exit codes: 0 success, 2 validation or
//! feasibility failure, 3 configuration error, 1 anything else.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use glop_core::GlopError;

#[derive(Parser)]
#[command(name = "glop", version, about = "Hierarchical large-scale routing solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a uniform random dataset as JSON lines.
    Generate(GenerateArgs),
    /// Solve TSP instances by tour revision.
    SolveTsp(SolveArgs),
    /// Solve CVRP instances by partitioning and revision.
    SolveCvrp(SolveArgs),
    /// Solve PCTSP instances by partitioning and revision.
    SolvePctsp(SolveArgs),
    /// Train a neural SHPP reviser.
    TrainReviser(TrainReviserArgs),
    /// Train a partition heatmap model.
    TrainPartition(TrainPartitionArgs),
    /// Solve a dataset of any kind and report per-instance rows.
    Bench(SolveArgs),
    /// Repeat a benchmark over seeds 0..runs and report the spread.
    Stability(StabilityArgs),
    /// Exact reference solutions for small instances.
    Oracle(OracleArgs),
}

#[derive(Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub problem: glop_core::ProblemKind,
    /// Nodes (TSP) or customers (CVRP, PCTSP).
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub capacity: Option<f64>,
    /// PCTSP prize scale.
    #[arg(long)]
    pub kn: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum InitArg {
    RandomInsertion,
    IndexInsertion,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum AugmentArg {
    #[value(name = "1")]
    None,
    #[value(name = "2")]
    X2,
    #[value(name = "4")]
    X4,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Greedy,
    Sample,
}

#[derive(Args)]
pub struct SolveArgs {
    /// JSON-lines dataset or a TSPLIB file.
    #[arg(long)]
    pub input: PathBuf,
    /// Named configuration to start from.
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// JSON solver configuration to start from.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Revision sizes, largest first.
    #[arg(long, value_delimiter = ',')]
    pub rs: Vec<usize>,
    /// Revision rounds per size.
    #[arg(long, value_delimiter = ',', requires = "rs")]
    pub iters: Vec<usize>,
    /// Reviser per size (`dp`, `bf`, `2opt`, `identity`, `neural:<checkpoint>`); one name applies to all.
    #[arg(long, value_delimiter = ',')]
    pub reviser: Vec<String>,
    /// Initial tours per instance.
    #[arg(long = "W", alias = "w")]
    pub w: Option<usize>,
    #[arg(long)]
    pub init: Option<InitArg>,
    #[arg(long)]
    pub augment: Option<AugmentArg>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub num_samples: Option<usize>,
    /// Partition model checkpoint.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Neighbours per node in the partition graph.
    #[arg(long)]
    pub k: Option<usize>,
    /// Per-instance time budget in seconds.
    #[arg(long)]
    pub time_budget: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Reference objectives, one per line (numbers or result records).
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Rescale TSPLIB coordinates into the unit square.
    #[arg(long)]
    pub normalize: bool,
    /// Result records destination (default stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write emitted tours and routes here as JSON lines.
    #[arg(long)]
    pub solutions: Option<PathBuf>,
    /// Write the full report as JSON here.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Args)]
pub struct StabilityArgs {
    #[command(flatten)]
    pub solve: SolveArgs,
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
}

#[derive(Args)]
pub struct TrainReviserArgs {
    /// Segment size.
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub stage: u8,
    #[arg(long, default_value_t = 1)]
    pub epochs: usize,
    #[arg(long, default_value_t = 100)]
    pub steps_per_epoch: usize,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.99)]
    pub lr_decay: f64,
    #[arg(long, default_value_t = 1.0)]
    pub clip_norm: f64,
    /// Wall-clock budget for stage one.
    #[arg(long)]
    pub seconds: Option<u64>,
    /// Use the full-size architecture instead of the desk-scale one.
    #[arg(long)]
    pub full_scale: bool,
    /// Checkpoint(s) to start from; stage two needs one per size, largest first.
    #[arg(long, value_delimiter = ',')]
    pub init: Vec<PathBuf>,
    /// Stage two: size of the TSP instances segments are cut from.
    #[arg(long, default_value_t = 200)]
    pub tsp_n: usize,
    /// Stage two: number of TSP instances.
    #[arg(long, default_value_t = 16)]
    pub instances: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output checkpoint(s), matching `--init` in stage two.
    #[arg(long, value_delimiter = ',', required = true)]
    pub out: Vec<PathBuf>,
    /// Training history destination (default stdout).
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Args)]
pub struct TrainPartitionArgs {
    #[arg(long)]
    pub problem: glop_core::ProblemKind,
    /// Customers per training instance.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long)]
    pub capacity: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Sampled partitions per instance.
    #[arg(long, default_value_t = 16)]
    pub samples: usize,
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
    #[arg(long, default_value_t = 200, alias = "epochs")]
    pub steps: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Distinct training instances (default: one per sample slot).
    #[arg(long)]
    pub pool: Option<usize>,
    #[arg(long)]
    pub full_scale: bool,
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum OracleSolver {
    Dp,
    Bf,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum OracleMode {
    /// Open path from the first to the last node.
    Path,
    /// Closed tour.
    Cycle,
}

#[derive(Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "dp")]
    pub solver: OracleSolver,
    #[arg(long, default_value = "path")]
    pub mode: OracleMode,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<GlopError>())
        .map_or(1, |e| e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(3);
        }
    };
    let result = glop_core::pipeline::init_threads_from_env()
        .map_err(anyhow::Error::from)
        .and_then(|_| match cli.command {
            Command::Generate(a) => commands::generate(a),
            Command::SolveTsp(a) => commands::solve(a, Some(glop_core::ProblemKind::Tsp)),
            Command::SolveCvrp(a) => commands::solve(a, Some(glop_core::ProblemKind::Cvrp)),
            Command::SolvePctsp(a) => commands::solve(a, Some(glop_core::ProblemKind::Pctsp)),
            Command::Bench(a) => commands::solve(a, None),
            Command::Stability(a) => commands::stability(a),
            Command::TrainReviser(a) => commands::train_reviser(a),
            Command::TrainPartition(a) => commands::train_partition(a),
            Command::Oracle(a) => commands::oracle(a),
        });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
