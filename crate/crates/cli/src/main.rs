use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use uda_cli::{exit_code, run, Cli, EXIT_OTHER};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    match run(&cli, &mut std::io::stdout()).with_context(|| format!("{name} failed")) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<uda_core::Error>().map_or(EXIT_OTHER, exit_code);
            ExitCode::from(code)
        }
    }
}
