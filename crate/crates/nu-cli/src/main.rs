//! `nu` — reference-based Wasserstein metrics at the command line.
//!
//! Every subcommand prints a deterministic JSON report to stdout (numbers at
//! 17 significant digits), writes CSV sidecars for tabular payloads into
//! `--out`, and reports wall time on stderr. Exit codes: 0 success, 2
//! invalid input, 3 solver failure.

mod commands;
mod report;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "nu", version, about = "reference-based Wasserstein metrics and transport tools")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct GlobalArgs {
    /// Parallelism budget for slice solves and grid sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Accept measures with any positive mass and rescale to 1.
    #[arg(long, global = true, default_value_t = false)]
    renormalize: bool,

    /// Directory for CSV sidecars and generated files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Primary stdout payload: the JSON report or the main CSV table.
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Json)]
    format: OutputFormat,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Exact optimal transport between two measures.
    Ot(commands::OtArgs),
    /// The reference-based distance between two measures.
    Dist(commands::DistArgs),
    /// ε-relaxation table of the multi-marginal problem.
    MmTable(commands::MmTableArgs),
    /// Geodesic evaluation and convexity scan of a functional.
    Geodesic(commands::GeodesicArgs),
    /// Layerwise-Wasserstein distance (and the segment equivalence check).
    Layerwise(commands::LayerwiseArgs),
    /// Discrete Knothe-Rosenblatt rearrangement in the plane.
    Kr(commands::KrArgs),
    /// Nestedness analysis of an unequal-dimensional model.
    Nested(commands::NestedArgs),
    /// Dual metric between two references under a fixed source.
    Dualdist(commands::DualdistArgs),
    /// Contraction fixed-point solver for the equilibrium problem.
    Fixedpoint(commands::FixedpointArgs),
    /// Deterministic instance generators.
    Gen(commands::GenArgs),
}

fn main() {
    let cli = Cli::parse();
    if let Some(n) = cli.global.threads {
        // A failed rebuild only means the pool was already initialized.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let start = Instant::now();
    let result = match &cli.command {
        Command::Ot(args) => commands::cmd_ot(args, &cli.global),
        Command::Dist(args) => commands::cmd_dist(args, &cli.global),
        Command::MmTable(args) => commands::cmd_mm_table(args, &cli.global),
        Command::Geodesic(args) => commands::cmd_geodesic(args, &cli.global),
        Command::Layerwise(args) => commands::cmd_layerwise(args, &cli.global),
        Command::Kr(args) => commands::cmd_kr(args, &cli.global),
        Command::Nested(args) => commands::cmd_nested(args, &cli.global),
        Command::Dualdist(args) => commands::cmd_dualdist(args, &cli.global),
        Command::Fixedpoint(args) => commands::cmd_fixedpoint(args, &cli.global),
        Command::Gen(args) => commands::cmd_gen(args, &cli.global),
    };
    let elapsed = start.elapsed();
    match result {
        Ok(stdout_payload) => {
            print!("{stdout_payload}");
            eprintln!("wall_time_s: {:.6}", elapsed.as_secs_f64());
        }
        Err(err) => {
            eprintln!("error: {err}");
            eprintln!("wall_time_s: {:.6}", elapsed.as_secs_f64());
            std::process::exit(if err.is_user_error() { 2 } else { 3 });
        }
    }
}
