//! `conceptkit` command-line front end.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use conceptkit::Error;

#[derive(Parser, Debug)]
#[command(
    name = "conceptkit",
    version,
    about = "Unsupervised concept localization toolkit"
)]
struct Cli {
    /// Seed for every stochastic component.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Maximum worker threads; results never depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Resize, average and renormalize a layer manifest into one attention matrix.
    Aggregate(AggregateArgs),
    /// Discover concept masks from aggregated attention and a saliency map.
    Localize(LocalizeArgs),
    /// Transport distance between two grid maps under the location cost.
    Emd(EmdArgs),
    /// Optimal one-to-one assignment for a cost matrix.
    Assign(AssignArgs),
    /// Score predicted masks against ground truth.
    Bench(BenchArgs),
    /// Top-k prototype classification accuracy of query features.
    Classify(ClassifyArgs),
    /// Optimize concept tokens against a synthetic scene.
    TrainSandbox(TrainArgs),
    /// Generate a synthetic scene bundle from a spec.
    Fixtures(FixturesArgs),
}

#[derive(Args, Debug)]
struct AggregateArgs {
    /// Layer manifest JSON.
    #[arg(long)]
    manifest: PathBuf,
    /// Output RAWT path.
    #[arg(long)]
    out: PathBuf,
    /// Target grid, `H` or `HxW`.
    #[arg(long, value_parser = commands::parse_side)]
    side: (usize, usize),
    /// Reload the output and check that every row sums to 1.
    #[arg(long)]
    verify: bool,
}

#[derive(Args, Debug)]
struct LocalizeArgs {
    /// Aggregated attention RAWT, or a layer manifest JSON aggregated on the fly.
    #[arg(long)]
    attention: PathBuf,
    /// Saliency map RAWT of shape `[h, w]`.
    #[arg(long)]
    saliency: PathBuf,
    /// Localization config JSON (`n_max`, `adjacency_connectivity`, `max_post_iters`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Solver {
    Exact,
    Sinkhorn,
}

#[derive(Args, Debug)]
struct EmdArgs {
    /// Supply map RAWT `[h, w]`.
    #[arg(long)]
    supply: PathBuf,
    /// Demand map RAWT `[h, w]`.
    #[arg(long)]
    demand: PathBuf,
    #[arg(long, value_enum, default_value_t = Solver::Exact)]
    solver: Solver,
    /// Entropic regularization for the sinkhorn solver.
    #[arg(long, default_value_t = 0.01)]
    eps: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Use raw cell distances instead of dividing by the grid diagonal.
    #[arg(long)]
    raw_cost: bool,
    /// Optional RAWT output of the transport plan.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Optional JSON report path (printed to stdout otherwise).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AssignArgs {
    /// Cost matrix RAWT; uint8 input is solved in exact integer arithmetic.
    #[arg(long)]
    cost: PathBuf,
    #[arg(long)]
    maximize: bool,
    /// Optional JSON report path (printed to stdout otherwise).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Directory of predicted `mask_<k>.rawt` files.
    #[arg(long)]
    pred: PathBuf,
    /// Directory of ground-truth `mask_<k>.rawt` files.
    #[arg(long)]
    gt: PathBuf,
    /// Optional JSON report path (printed to stdout otherwise).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Metric {
    Cosine,
    Dot,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    /// Feature bank manifest JSON.
    #[arg(long)]
    bank: PathBuf,
    /// A query is correct when its prototype ranks among the top `k`.
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, value_enum, default_value_t = Metric::Cosine)]
    metric: Metric,
    /// Optional JSON report path (printed to stdout otherwise).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Scene JSON written by `fixtures`.
    #[arg(long)]
    scene: PathBuf,
    /// Training config JSON; its seed is replaced by `--seed`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the total step count (warmup is capped to it).
    #[arg(long)]
    steps: Option<usize>,
    /// Output directory for the trace, embeddings and report.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FixturesArgs {
    /// Scene spec JSON.
    #[arg(long)]
    spec: PathBuf,
    /// Override the attention noise scale of the scene spec.
    #[arg(long)]
    noise: Option<f64>,
    /// Output directory for the bundle.
    #[arg(long)]
    out: PathBuf,
}

/// 0 success, 2 input or format error, 3 empty localization, 4 divergence.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::EmptyResult(_) => 3,
        Error::Divergence { .. } => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
        {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Aggregate(a) => commands::aggregate(a),
        Command::Localize(a) => commands::localize(a),
        Command::Emd(a) => commands::emd(a),
        Command::Assign(a) => commands::assign(a),
        Command::Bench(a) => commands::bench(a),
        Command::Classify(a) => commands::classify(a),
        Command::TrainSandbox(a) => commands::train_sandbox(a, cli.seed),
        Command::Fixtures(a) => commands::fixtures(a, cli.seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
