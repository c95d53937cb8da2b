use std::process::ExitCode;

use clap::Parser;
use orf_cli::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match orf_cli::run(&cli.command) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
