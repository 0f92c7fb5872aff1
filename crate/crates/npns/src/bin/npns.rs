use clap::{Args, Parser, Subcommand};
use npns::config::RunConfig;
use npns::error::Error;
use npns::runner::{run, Outcome};
use std::path::PathBuf;
use std::process::ExitCode;

/// Stochastic electrokinetic flow laboratory: simulation, inequality
/// verification, and pullback-attractor experiments on the 2D torus.
#[derive(Parser)]
#[command(name = "npns", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML run configuration
    #[arg(long)]
    config: PathBuf,
    /// worker pool size
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// override the configured output directory
    #[arg(long)]
    output: Option<PathBuf>,
    /// skip jobs whose results already exist in the output directory
    #[arg(long)]
    resume: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory and write diagnostics
    Simulate(CommonArgs),
    /// Run all inequality checks on a fresh trajectory
    Verify(CommonArgs),
    /// Build one pullback attractor cloud
    Pullback(CommonArgs),
    /// Sweep noise intensities and measure attractor distances
    Sweep(CommonArgs),
    /// Tabulate the small-noise solution error against the deterministic run
    Convergence(CommonArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::Simulate(a) => ("simulate", a),
        Command::Verify(a) => ("verify", a),
        Command::Pullback(a) => ("pullback", a),
        Command::Sweep(a) => ("sweep", a),
        Command::Convergence(a) => ("convergence", a),
    };
    let mut config = match RunConfig::from_file(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: invalid config {}:\n{e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    if config.experiment.kind != kind {
        // the subcommand decides what runs; keep the config consistent
        config.experiment.kind = kind.into();
    }
    match run(&config, args.workers, args.output.as_deref(), args.resume) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailure) => {
            eprintln!("one or more checks failed; see the output manifest");
            ExitCode::from(1)
        }
        Err(e @ (Error::Config(_) | Error::InvalidParameter(_) | Error::Toml(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
