//! `countfit` — simulate, fit, and evaluate count-data rate models from the
//! command line.
//!
//! Exit codes: 0 success, 1 input or validation error, 2 analytic
//! non-success (a fit that did not converge, an empty GoF report).

mod commands;
mod io;
mod svg;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use countfit::error::Error;

#[derive(Parser)]
#[command(
    name = "countfit",
    version,
    about = "Count-data rate models (NB, ZINB, mixed NB) with binned calibration diagnostics"
)]
struct Cli {
    /// Suppress warnings (errors still print).
    #[arg(long, global = true)]
    quiet: bool,
    /// Verbose progress logging.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic dataset from a named or file-defined scenario.
    Simulate(SimulateArgs),
    /// Fit a model to a CSV dataset.
    Fit(FitArgs),
    /// Binned goodness-of-fit evaluation of a fitted model.
    Gof(GofArgs),
    /// Residual and naive observed-vs-predicted charts.
    Report(ReportArgs),
    /// Side-by-side statistics for two or more fits of one dataset.
    Compare(CompareArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Name of a shipped scenario (see --list).
    #[arg(long, conflicts_with = "scenario_file")]
    scenario: Option<String>,
    /// Path to a scenario JSON file.
    #[arg(long)]
    scenario_file: Option<PathBuf>,
    /// Seed override (defaults to the scenario's own seed).
    #[arg(long, env = "COUNTFIT_SEED")]
    seed: Option<u64>,
    #[arg(long, required_unless_present = "list")]
    out_dir: Option<PathBuf>,
    /// List the shipped scenarios and exit.
    #[arg(long)]
    list: bool,
}

#[derive(Args)]
struct FitArgs {
    /// Dataset CSV.
    #[arg(long)]
    input: PathBuf,
    /// Column-mapping schema JSON.
    #[arg(long)]
    schema: PathBuf,
    /// Model-spec JSON.
    #[arg(long)]
    spec: PathBuf,
    /// Family override; must stay consistent with the spec's term lists.
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Gauss-Hermite nodes for GLMM-NB fits (odd; 1 = Laplace).
    #[arg(long)]
    quadrature_points: Option<usize>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    gradient_tolerance: Option<f64>,
}

#[derive(Args)]
struct GofArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    /// Fit document produced by `countfit fit`.
    #[arg(long)]
    fit: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    bin_width: Option<f64>,
    #[arg(long)]
    max_binned_mean: Option<f64>,
    #[arg(long)]
    min_bin_count: Option<usize>,
    #[arg(long)]
    k_display: Option<usize>,
    /// Evaluate even if the fit did not converge.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    fit: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    /// Fit documents to compare (repeat; at least two).
    #[arg(long = "fit", required = true, num_args = 1..)]
    fits: Vec<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    bin_width: Option<f64>,
    #[arg(long)]
    max_binned_mean: Option<f64>,
    #[arg(long)]
    min_bin_count: Option<usize>,
    /// Run GoF even on non-converged fits.
    #[arg(long)]
    force: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet {
        "error"
    } else if cli.verbose {
        "debug"
    } else {
        "warn"
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let outcome = match cli.command {
        Command::Simulate(args) => commands::simulate(args),
        Command::Fit(args) => commands::fit(args),
        Command::Gof(args) => commands::gof(args),
        Command::Report(args) => commands::report(args),
        Command::Compare(args) => commands::compare(args),
    };

    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}

/// Distinguishes analytic non-success (exit 2) from input errors (exit 1).
fn analytic_exit(err: &Error) -> Option<ExitCode> {
    match err {
        Error::EmptyReport(_) => Some(ExitCode::from(2)),
        _ => None,
    }
}
