//! `ftcy`: batch front end for the explicit construction, the Newton solver,
//! the identity suite and Ricci diagnostics.
//!
//! Exit status: 0 success, 2 numerical failure, 3 usage error, 4 I/O error.

mod commands;
mod config;
mod failure;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::IndexList;
use failure::{ExitKind, Failure};

#[derive(Parser, Debug)]
#[command(name = "ftcy", version, about = "Balanced metrics with prescribed volume form on flat complex tori")]
struct Cli {
    /// Plain-text `key = value` settings; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the explicit one-variable solution and write fields, report and profile.
    Construct(ConstructArgs),
    /// Solve M(u η^{n-2}) = f by Newton continuation.
    Solve(SolveArgs),
    /// Run the identity suite.
    Verify(VerifyArgs),
    /// Hermitian Ricci form of a metric dump.
    Ricci(RicciArgs),
    /// Merge earlier outputs into one summary with plot data.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct ConstructArgs {
    /// Target determinant ratio, in (0, 1).
    #[arg(long)]
    pub delta: Option<f64>,
    /// Complex dimension (at least 3).
    #[arg(long)]
    pub n: Option<usize>,
    /// Points on the active axis.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Bound on the determinant-identity residual.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    /// Source term as an FDF1 scalar dump; overrides the generator.
    #[arg(long)]
    pub f: Option<PathBuf>,
    /// Amplitude of the built-in band-limited random source.
    #[arg(long)]
    pub amplitude: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Active real axes, e.g. `1,3`.
    #[arg(long)]
    pub axes: Option<IndexList>,
    /// Points per active axis, e.g. `64,64`.
    #[arg(long)]
    pub grid: Option<IndexList>,
    /// Final Newton tolerance on ‖M(u) − f‖∞.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Skip the kernel-margin estimate.
    #[arg(long)]
    pub no_margin: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Relative tolerance for exact identities.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Comma-separated subset of checks.
    #[arg(long)]
    pub only: Option<String>,
    /// Inject a defect: flip-sign, drop-factorial or break-mean-zero.
    #[arg(long)]
    pub mutation: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RicciArgs {
    /// FDF1 metric dump.
    #[arg(long)]
    pub metric: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Directory holding earlier command outputs.
    #[arg(long)]
    pub dir: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), Failure> {
    let file = config::ConfigFile::load(cli.config.as_deref())?;
    match cli.command {
        Command::Construct(a) => commands::construct(&a, &file),
        Command::Solve(a) => commands::solve(&a, &file),
        Command::Verify(a) => commands::verify(&a, &file),
        Command::Ricci(a) => commands::ricci(&a, &file),
        Command::Report(a) => commands::report(&a, &file),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(ExitKind::Usage as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.kind as u8)
        }
    }
}
