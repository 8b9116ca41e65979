use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dcw_cli::config::{parse_config, Command};
use dcw_cli::run::{apply_overrides, run, write_error_record};

#[derive(Parser)]
#[command(
    name = "dcw",
    about = "Nonparametric welfare analysis for discrete-choice models",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration file (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Override the config's random seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum CliCommand {
    /// Simulate cross-section or panel choice data
    Simulate(CommonArgs),
    /// Fit kernel probability models to datasets
    Estimate(CommonArgs),
    /// Set-identification bounds on transition probabilities
    Bounds(CommonArgs),
    /// Welfare-level, CV/EV, and joint distribution curves
    Welfare(CommonArgs),
    /// Social welfare over a population file
    Swf(CommonArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match &cli.command {
        CliCommand::Simulate(a) => (Command::Simulate, a),
        CliCommand::Estimate(a) => (Command::Estimate, a),
        CliCommand::Bounds(a) => (Command::Bounds, a),
        CliCommand::Welfare(a) => (Command::Welfare, a),
        CliCommand::Swf(a) => (Command::Swf, a),
    };

    let mut config = match parse_config(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    if let Err(e) = apply_overrides(&mut config, command, args.seed, args.out.as_deref()) {
        eprintln!("error: {e}");
        return ExitCode::FAILURE;
    }
    match run(&config, Some(&args.config)) {
        Ok(outcome) => {
            for path in &outcome.outputs {
                println!("wrote {}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let message = format!("{e:#}");
            eprintln!("error: {message}");
            if let Ok(path) = write_error_record(&config.out_dir, &message) {
                eprintln!("error record at {}", path.display());
            }
            ExitCode::FAILURE
        }
    }
}
