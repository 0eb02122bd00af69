//! `qlll`: generate instances, run the resampling solver, enumerate exact history trees
//! and evaluate the budget bounds. Results go to stdout as canonical JSON, diagnostics
//! to stderr.
//!
//! Exit codes: 0 ok, 2 input error, 3 invariant violation, 4 resource cap.

mod canonical;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "qlll",
    version,
    about = "Moser-style resampling for commuting k-local projectors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded random commuting instance.
    Gen(GenArgs),
    /// Run sampled trajectories and report a run record.
    Solve(SolveArgs),
    /// Enumerate every measurement history with its exact probability.
    Enumerate(EnumerateArgs),
    /// Compute the failure budget and success bound for given parameters.
    Bound(BoundArgs),
    /// Check an instance and report every violation.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum InstanceFormat {
    Json,
    Dimacs,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Rank of every projector.
    #[arg(long, default_value_t = 1)]
    rank: usize,
    /// Skip the random product-unitary conjugation.
    #[arg(long)]
    diagonal: bool,
    /// Cap on every inclusive neighborhood size.
    #[arg(long)]
    max_degree: Option<usize>,
    #[arg(long, value_enum, default_value_t = InstanceFormat::Json)]
    format: InstanceFormat,
    /// Write here instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct InstanceArg {
    /// Instance file: JSON, or DIMACS CNF when the name ends in `.cnf` or `.dimacs`.
    #[arg(long)]
    instance: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    input: InstanceArg,
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Independent trials; trial i uses seed splitmix64(seed ^ i).
    #[arg(long, default_value_t = 1)]
    trials: usize,
    /// Override the failure budget chosen from epsilon.
    #[arg(long = "N", visible_alias = "budget")]
    budget: Option<usize>,
    /// Check after every completed fix that satisfied projectors stay satisfied.
    #[arg(long)]
    assert_lemma3: bool,
    /// Omit wall-clock timings so output is byte-stable.
    #[arg(long)]
    no_timings: bool,
}

#[derive(Args)]
struct EnumerateArgs {
    #[command(flatten)]
    input: InstanceArg,
    /// Failure budget.
    #[arg(long = "N", visible_alias = "budget")]
    budget: usize,
    /// `averaged`, or `X,Y` with X the initial basis state in binary (highest qubit
    /// first) and Y the fresh bits in consumption order.
    #[arg(long, default_value = "averaged")]
    initial: String,
    #[arg(long, default_value_t = 2_000_000)]
    node_cap: usize,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long)]
    m: usize,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    r: usize,
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    input: InstanceArg,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(message) = commands::configure_threads() {
        eprintln!("qlll: {message}");
        return ExitCode::from(2);
    }
    let outcome = match cli.command {
        Command::Gen(args) => commands::gen(args),
        Command::Solve(args) => commands::solve(args),
        Command::Enumerate(args) => commands::enumerate(args),
        Command::Bound(args) => commands::bound(args),
        Command::Validate(args) => commands::validate(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("qlll: {}", failure.message);
            ExitCode::from(failure.code as u8)
        }
    }
}
