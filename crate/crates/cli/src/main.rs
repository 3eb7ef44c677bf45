use std::process::ExitCode;

use clap::Parser;
use pinet_cli::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match pinet_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
