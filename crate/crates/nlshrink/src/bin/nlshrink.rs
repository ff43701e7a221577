use clap::{Parser, Subcommand};

use nlshrink::cli;

/// Nonlinear shrinkage estimation of large covariance and precision
/// matrices.
#[derive(Parser)]
#[command(name = "nlshrink", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a covariance matrix from observations
    Estimate(cli::EstimateArgs),
    /// Estimate a precision matrix directly from observations
    Precision(cli::EstimateArgs),
    /// Fit the population spectral distribution to a sample spectrum
    Spectrum(cli::SpectrumArgs),
    /// Solve the Marčenko–Pastur equation forward for a given spectrum
    MpSolve(cli::MpSolveArgs),
    /// Run a Monte Carlo PRIAL study from a config file
    Simulate(cli::SimulateArgs),
}

fn main() {
    let parsed = Cli::parse();
    let result = match &parsed.command {
        Command::Estimate(args) => cli::cmd_estimate(args),
        Command::Precision(args) => cli::cmd_precision(args),
        Command::Spectrum(args) => cli::cmd_spectrum(args),
        Command::MpSolve(args) => cli::cmd_mp_solve(args),
        Command::Simulate(args) => cli::cmd_simulate(args),
    };
    std::process::exit(cli::exit_code(result));
}
