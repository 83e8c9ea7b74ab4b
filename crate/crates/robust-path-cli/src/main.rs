//! Benchmark and inspection front end for the robust-path library.
//!
//! Exit codes: 0 on success, 1 when a verification or run fails, 2 on usage
//! errors (including malformed generator specs and missing seeds).

mod commands;
mod config;
mod genspec;
mod record;

use clap::{Parser, Subcommand};

use config::{CapsArgs, CommonArgs};
use record::Pipeline;

#[derive(Parser)]
#[command(name = "robust-path", version, about = "Min-max robust s-t path solvers and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance end to end and print the run record.
    Solve(SolveArgs),
    /// Build a pivotal-gap instance, solve its relaxations, print the gap.
    GapDemo(GapDemoArgs),
    /// Write a canonical instance file for a generator spec.
    Generate(GenerateArgs),
    /// Check a claimed path file against an instance file.
    Verify(VerifyArgs),
    /// Sweep pipelines over a generator grid and emit CSV rows.
    Bench(BenchArgs),
    /// Sample the rounding stage and compare against the proved bounds.
    MomentCheck(MomentArgs),
}

#[derive(clap::Args)]
struct SolveArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Write the solved path as a claim file for later verification.
    #[arg(long)]
    output: Option<std::path::PathBuf>,
}

#[derive(clap::Args)]
struct GapDemoArgs {
    /// One of: flow-two-vertex, flow-disjoint, weak-tree, tree-fix.
    #[arg(long)]
    kind: String,
    /// Number of agents in the generated instance.
    #[arg(long)]
    k: usize,
}

#[derive(clap::Args)]
struct GenerateArgs {
    /// Generator spec, e.g. "two-vertex(k=4)" or "tw2(seed=1,n=8,m=12,k=3,max=9)".
    #[arg(long)]
    gen: String,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

#[derive(clap::Args)]
struct VerifyArgs {
    /// Instance file to verify against.
    #[arg(long)]
    instance: std::path::PathBuf,
    /// Claim file written by `solve --output`.
    #[arg(long)]
    path: std::path::PathBuf,
}

#[derive(clap::Args)]
struct BenchArgs {
    /// Pipelines to sweep; repeat the flag for several.
    #[arg(long = "pipeline", required = true)]
    pipelines: Vec<Pipeline>,
    /// Generator template with {size} and {seed} placeholders.
    #[arg(long)]
    gen_template: String,
    /// Comma-separated sizes substituted for {size}.
    #[arg(long, value_delimiter = ',', required = true)]
    sizes: Vec<usize>,
    /// Comma-separated seeds substituted for {seed}.
    #[arg(long, value_delimiter = ',', required = true)]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    /// Worker threads for independent cells.
    #[arg(long, default_value_t = 4)]
    workers: usize,
    /// Skip the brute-force optimum column.
    #[arg(long)]
    no_opt: bool,
    /// Also sample moment statistics per cell (slower).
    #[arg(long)]
    with_moment: bool,
    #[command(flatten)]
    caps: CapsArgs,
    /// Output CSV file; stdout when omitted.
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

#[derive(clap::Args)]
struct MomentArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value_t = 2000)]
    moment_trials: usize,
}

/// Errors carrying the process exit code: 1 for run or verification
/// failures, 2 for usage problems discovered after argument parsing.
pub struct CliError {
    code: i32,
    err: anyhow::Error,
}

impl CliError {
    pub fn usage(err: anyhow::Error) -> Self {
        CliError { code: 2, err }
    }

    pub fn failure(err: anyhow::Error) -> Self {
        CliError { code: 1, err }
    }
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(err: E) -> Self {
        CliError::failure(err.into())
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(args) => commands::cmd_solve(args),
        Command::GapDemo(args) => commands::cmd_gap_demo(args),
        Command::Generate(args) => commands::cmd_generate(args),
        Command::Verify(args) => commands::cmd_verify(args),
        Command::Bench(args) => commands::cmd_bench(args),
        Command::MomentCheck(args) => commands::cmd_moment_check(args),
    };
    if let Err(e) = result {
        eprintln!("error: {:#}", e.err);
        std::process::exit(e.code);
    }
}
