use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use glad_core::experiment::{self, ExperimentConfig, ExperimentError, Report};

#[derive(Parser)]
#[command(name = "glad", version, about = "Gibbs-sampling distributed power control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every cell and write trace CSVs plus a summary.
    Run(Common),
    /// Run every cell and write only the summary table.
    Sweep(Common),
    /// Compare variants on shared networks and seeds.
    Compare(Common),
    /// Exact chain analysis of the discrete algorithm.
    Analyze(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Added to every seed in the config.
    #[arg(long, default_value_t = 0)]
    seed_offset: u64,
}

fn execute(cli: Cli) -> Result<Report, ExperimentError> {
    let (Command::Run(c) | Command::Sweep(c) | Command::Compare(c) | Command::Analyze(c)) = &cli.command;
    let config = ExperimentConfig::load(&c.config)?;
    match cli.command {
        Command::Run(_) => experiment::run_experiment(&config, &c.out, c.seed_offset, true),
        Command::Sweep(_) => experiment::run_experiment(&config, &c.out, c.seed_offset, false),
        Command::Compare(_) => experiment::compare_variants(&config, &c.out, c.seed_offset),
        Command::Analyze(_) => experiment::analyze(&config, &c.out, c.seed_offset),
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(report) => {
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", report.text);
            for f in &report.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
