mod commands;
mod files;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qsurrogate_core::baselines::Variant;
use qsurrogate_core::datagen::SpecFamily;
use qsurrogate_core::simqueue::IdleRule;
use qsurrogate_core::SystemKind;
use serde::Serialize;

/// Neural surrogates for multi-server queue occupancy distributions.
#[derive(Debug, Parser)]
#[command(name = "qsurrogate", version)]
pub struct Cli {
    /// Worker threads for parallel stages (0 = one per core).
    #[arg(long, global = true, env = "QSURROGATE_JOBS", default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled training dataset (JSON lines).
    GenData(GenDataArgs),
    /// Write the external benchmark grid, optionally labeled by simulation.
    Testset2(Testset2Args),
    /// Simulate one queue spec or a JSON-lines batch of specs.
    Simulate(SimulateArgs),
    /// Closed-form M/M/c stationary distribution.
    ExactMmc(ExactMmcArgs),
    /// Train a surrogate network on a dataset file.
    Train(TrainArgs),
    /// Predict distributions for feature rows.
    Infer(InferArgs),
    /// Segmented PARE/REM report for predictions against ground truth.
    Evaluate(EvaluateArgs),
    /// Two-moment mean-number-in-system approximations.
    Baseline(BaselineArgs),
    /// Brute-force (rate, servers) cost minimization.
    Optimize(OptimizeArgs),
    /// Replication confidence interval for the mean number in system.
    Ci(CiArgs),
    /// Re-run a command from its manifest and compare output digests.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData(_) => "gen-data",
            Command::Testset2(_) => "testset2",
            Command::Simulate(_) => "simulate",
            Command::ExactMmc(_) => "exact-mmc",
            Command::Train(_) => "train",
            Command::Infer(_) => "infer",
            Command::Evaluate(_) => "evaluate",
            Command::Baseline(_) => "baseline",
            Command::Optimize(_) => "optimize",
            Command::Ci(_) => "ci",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimFlags {
    /// Arrivals per simulation run.
    #[arg(long, default_value_t = 1_000_000)]
    pub arrivals: u64,
    /// Fraction of arrivals discarded as warm-up.
    #[arg(long, default_value_t = 0.01)]
    pub warmup: f64,
    /// Truncation level of the occupancy vector.
    #[arg(long, default_value_t = 500)]
    pub l: usize,
    /// Idle-server choice for two-server systems.
    #[arg(long, default_value = "random")]
    pub idle_rule: IdleRule,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenDataArgs {
    #[arg(long)]
    pub system: SystemKind,
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub sim: SimFlags,
    /// Spec generator: ph, mmc or erlang-h2.
    #[arg(long, default_value = "ph")]
    pub family: SpecFamily,
    /// Label Markovian rows with the closed form (requires --family mmc).
    #[arg(long)]
    pub exact_labels: bool,
    /// Also write each two-server row with its service blocks exchanged.
    #[arg(long)]
    pub augment_swap: bool,
    #[arg(long, default_value_t = 4)]
    pub n_moments: usize,
    /// Largest tolerated probability mass beyond the truncation level.
    #[arg(long, default_value_t = 1e-3)]
    pub delta: f64,
    /// Largest phase-type order.
    #[arg(long, default_value_t = 100)]
    pub max_order: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Testset2Args {
    #[arg(long)]
    pub system: SystemKind,
    #[arg(long)]
    pub out: PathBuf,
    /// Simulate every spec and write a dataset file instead of bare specs.
    #[arg(long)]
    pub label: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub sim: SimFlags,
    #[arg(long, default_value_t = 4)]
    pub n_moments: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub delta: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// JSON queue spec, or JSON lines with one spec per line.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub sim: SimFlags,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExactMmcArgs {
    #[arg(long)]
    pub lambda: f64,
    #[arg(long)]
    pub mu: f64,
    #[arg(long)]
    pub c: usize,
    #[arg(long, default_value_t = 500)]
    pub l: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 256)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Epochs without validation improvement before stopping.
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
    /// Moments per distribution (defaults to the dataset header).
    #[arg(long)]
    pub n_moments: Option<usize>,
    /// Comma-separated hidden widths.
    #[arg(long, value_delimiter = ',', default_value = "50,70,200,350,200,350,600")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 0.0)]
    pub weight_decay: f64,
    /// Start the output layer at zero bias instead of the mean label.
    #[arg(long)]
    pub no_bias_init: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InferArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset file or JSON lines of feature arrays.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    /// Dataset file or JSON lines of probability arrays.
    #[arg(long)]
    pub truth: PathBuf,
    /// Prediction file written by `infer` or JSON lines of arrays.
    #[arg(long)]
    pub pred: PathBuf,
    /// Segment attributes per row; optional when --truth is a dataset file.
    #[arg(long)]
    pub meta: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "25,50,75,90,99,99.9")]
    pub percentiles: Vec<f64>,
    /// REM denominator: predicted (as defined) or truth.
    #[arg(long, default_value = "predicted", value_parser = ["predicted", "truth"])]
    pub rem_denominator: String,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BaselineArgs {
    #[arg(long, required_unless_present = "data")]
    pub lambda: Option<f64>,
    #[arg(long, required_unless_present = "data")]
    pub mu: Option<f64>,
    #[arg(long, required_unless_present = "data")]
    pub c: Option<usize>,
    #[arg(long, required_unless_present = "data")]
    pub ca2: Option<f64>,
    #[arg(long, required_unless_present = "data")]
    pub cs2: Option<f64>,
    #[arg(long, default_value = "klb")]
    pub variant: Variant,
    /// Evaluate every GI/GI/c row of a dataset file instead.
    #[arg(long, conflicts_with_all = ["lambda", "mu", "c", "ca2", "cs2"])]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OptimizeArgs {
    /// Backend: nn (needs --model), exact (M/M/c) or sim.
    #[arg(long, value_parser = ["nn", "exact", "sim"])]
    pub evaluator: Option<String>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Inter-arrival law as JSON (default: exponential with mean 1).
    #[arg(long)]
    pub arrival: Option<PathBuf>,
    /// Service law shape as JSON, rescaled per rate (default: Gamma with
    /// SCV 4, or exponential for the exact backend).
    #[arg(long)]
    pub service_shape: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    pub rate_min: f64,
    #[arg(long, default_value_t = 0.3)]
    pub rate_max: f64,
    #[arg(long, default_value_t = 0.001)]
    pub rate_step: f64,
    #[arg(long, default_value_t = 10)]
    pub c_max: usize,
    #[arg(long, default_value_t = 100.0)]
    pub c2: f64,
    #[arg(long, default_value_t = 500.0)]
    pub c1_base: f64,
    #[arg(long, default_value_t = 5.0)]
    pub c1_exponent: f64,
    /// Charge waiting customers only.
    #[arg(long)]
    pub queue_only: bool,
    /// Highest utilization the network backend accepts.
    #[arg(long, default_value_t = 0.95)]
    pub rho_max: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200_000)]
    pub arrivals: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CiArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub sim: SimFlags,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory for the replayed outputs.
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    if cli.jobs > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global();
    }
    match commands::run(cli, argv[1..].to_vec()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = serde_json::json!({
                "error": {
                    "kind": commands::error_kind(&e),
                    "message": format!("{e:#}"),
                }
            });
            eprintln!("{record}");
            ExitCode::from(1)
        }
    }
}
