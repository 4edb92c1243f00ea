use std::process::ExitCode;

use clap::Parser;

mod aggregate;
mod args;
mod estimate;
mod evaluate;
mod output;
mod simulate;

use args::{Cli, Command};
use output::CliError;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let command = match (cli.config, cli.command) {
        (Some(_), Some(_)) => {
            return Err(output::usage(
                "--config replaces the subcommand; pass one or the other",
            ))
        }
        (Some(path), None) => {
            let text = output::strip_comment_preamble(&std::fs::read_to_string(&path)?);
            serde_json::from_str::<Command>(&text).map_err(|e| {
                output::usage(format!("bad config {}: {e}", path.display()))
            })?
        }
        (None, Some(command)) => command,
        (None, None) => {
            return Err(output::usage(
                "missing subcommand; see `roadrisk --help`",
            ))
        }
    };

    // the fully resolved configuration, echoed into every output header
    let config_json = serde_json::to_string(&command).map_err(output::computation)?;

    match &command {
        Command::Estimate(args) => estimate::run(args, &config_json),
        Command::Evaluate(args) => evaluate::run(args, &config_json),
        Command::Simulate(args) => simulate::run(args, &config_json),
        Command::Aggregate(args) => aggregate::run(args, &config_json),
    }
}
