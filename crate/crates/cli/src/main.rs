//! Command-line front end: simulate trace pools, estimate and pool intensity
//! hyperparameters, analyse traces with parallel chains, and compute batch
//! metrics against ground truth.

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

mod commands;
mod manifest;

#[derive(Parser)]
#[command(
    name = "crjmcmc",
    version,
    about = "Change-point analysis of photobleach intensity traces"
)]
struct Cli {
    /// Worker threads (defaults to the number of physical cores).
    #[arg(long, global = true, env = "CRJMCMC_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a grid of ground-truth traces.
    Simulate(SimulateArgs),
    /// Estimate and pool intensity hyperparameters per experiment group.
    Hyperparams(HyperparamsArgs),
    /// Run the sampler on traces and write posterior summaries.
    Analyze(AnalyzeArgs),
    /// Compare posterior summaries against ground truth.
    Metrics(MetricsArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Simulation grid JSON; omit for the built-in defaults.
    #[arg(long, env = "CRJMCMC_CONFIG")]
    config: Option<PathBuf>,
    /// Output directory for trace CSVs and ground-truth JSONs.
    #[arg(long, env = "CRJMCMC_OUT")]
    out: PathBuf,
    #[arg(long, default_value_t = 0, env = "CRJMCMC_SEED")]
    seed: u64,
}

#[derive(Args)]
struct HyperparamsArgs {
    /// Glob of trace CSVs (quote it to keep the shell out of the way).
    #[arg(long)]
    traces: String,
    /// Output JSON path for the pooled hyperparameters.
    #[arg(long, env = "CRJMCMC_OUT")]
    out: PathBuf,
    /// Prior variance scaling for the single-fluorophore mean.
    #[arg(long, default_value_t = 0.005)]
    scaling_f: f64,
    /// Prior variance scaling for the background mean.
    #[arg(long, default_value_t = 1.0)]
    scaling_b: f64,
    /// Intensity floor for candidate filtering; defaults to 0.9 x mode.
    #[arg(long)]
    floor: Option<f64>,
    /// Weight traces for heterogeneous pools instead of inverse variance.
    #[arg(long)]
    heterogeneous: bool,
    /// Group label override; otherwise traces group by their simulation
    /// conditions (or "default" without a ground-truth sidecar).
    #[arg(long)]
    tag: Option<String>,
    /// Proposal-scan window size in frames.
    #[arg(long, default_value_t = 10)]
    window: usize,
    /// Proposal bump variance in frames squared.
    #[arg(long, default_value_t = 25.0)]
    base_variance: f64,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Glob of trace CSVs to analyse.
    #[arg(long)]
    traces: String,
    /// Pooled hyperparameters JSON from the `hyperparams` command.
    #[arg(long)]
    hyper: PathBuf,
    /// Chain/proposal configuration JSON; omit for defaults.
    #[arg(long, env = "CRJMCMC_CONFIG")]
    config: Option<PathBuf>,
    /// Output directory for summaries.
    #[arg(long, env = "CRJMCMC_OUT")]
    out: PathBuf,
    #[arg(long, default_value_t = 0, env = "CRJMCMC_SEED")]
    seed: u64,
    /// Override the per-chain iteration cap.
    #[arg(long, env = "CRJMCMC_MAX_ITER")]
    max_iter: Option<usize>,
    /// Override the convergence threshold.
    #[arg(long, env = "CRJMCMC_PSRF_THRESHOLD")]
    psrf_threshold: Option<f64>,
    /// Also dump per-iteration chain CSVs.
    #[arg(long)]
    dump_samples: bool,
}

#[derive(Args)]
struct MetricsArgs {
    /// Directory of `*.summary.json` files from `analyze`.
    #[arg(long)]
    estimates: PathBuf,
    /// Directory of `*.truth.json` files from `simulate`.
    #[arg(long)]
    truth: PathBuf,
    /// Output CSV path.
    #[arg(long, env = "CRJMCMC_OUT")]
    out: PathBuf,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()?;
    }
    match cli.command {
        Command::Simulate(args) => commands::simulate::run(args),
        Command::Hyperparams(args) => commands::hyperparams::run(args),
        Command::Analyze(args) => commands::analyze::run(args),
        Command::Metrics(args) => commands::metrics::run(args),
    }
}
