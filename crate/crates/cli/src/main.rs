use std::process::ExitCode;

use adaptive_dlm_cli::commands;
use adaptive_dlm_cli::config::{resolve, Flags, Subcommand};
use clap::Parser;

#[derive(Parser)]
#[command(name = "adlm", version, about = "Distributed lag models with adaptive spline priors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Subcommand)]
enum Command {
    /// Fit one model to a `t,x,y` series.
    Fit(Flags),
    /// Write one simulated series and its true lag curve.
    Simulate(Flags),
    /// Scenario-by-model simulation study.
    Study(Flags),
    /// Maximum-lag misspecification study.
    Misspec(Flags),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (cmd, flags) = match cli.command {
        Command::Fit(f) => (Subcommand::Fit, f),
        Command::Simulate(f) => (Subcommand::Simulate, f),
        Command::Study(f) => (Subcommand::Study, f),
        Command::Misspec(f) => (Subcommand::Misspec, f),
    };
    match resolve(cmd, &flags).and_then(|cfg| commands::run(&cfg)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
