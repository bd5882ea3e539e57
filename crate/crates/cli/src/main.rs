//! `eiv`: fit selectors on CSV data, run simulation experiments and query sensitivities.

mod fit;
mod manifest;
mod sensitivity;
mod simulate;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "eiv", version, about = "Sparse regression with errors in the design")]
struct Cli {
    /// Log level (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    log: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit one estimator on a CSV dataset.
    Fit(fit::FitArgs),
    /// Run a replicated experiment described by a TOML config.
    Simulate(simulate::SimulateArgs),
    /// Compute the ℓq-sensitivity of a Gram matrix.
    Sensitivity(sensitivity::SensitivityArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new().parse_filters(&cli.log).init();
    let result = match cli.command {
        Command::Fit(args) => fit::run(&args),
        Command::Simulate(args) => simulate::run(&args),
        Command::Sensitivity(args) => sensitivity::run(&args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
