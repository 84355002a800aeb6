use std::io::Write;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser};

use chernsim::commands::Command;
use chernsim::{execute, Overrides, RunConfig};

/// Interferometric Chern-number detection for the Haldane model.
#[derive(Parser)]
#[command(name = "chernsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    overrides: Overrides,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.command.is_none() && !cli.overrides.print_config {
        Cli::command().error(ErrorKind::MissingSubcommand, "a subcommand is required").exit();
    }
    let result = RunConfig::resolve(&cli.overrides).and_then(|cfg| {
        match &cli.command {
            Some(cmd) if !cli.overrides.print_config => execute(cmd, &cfg),
            _ => cfg.to_toml(),
        }
    });
    match result {
        Ok(text) => {
            let mut out = std::io::stdout().lock();
            if out.write_all(text.as_bytes()).and_then(|_| out.flush()).is_err() {
                return ExitCode::from(14);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprint!("{}", e.record());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
