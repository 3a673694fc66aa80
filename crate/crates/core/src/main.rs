use std::process::ExitCode;

use clap::Parser;
use leanreg::cli::{emit, run, Cli};

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match run(&cli).and_then(|o| emit(&o, cli.command.out_path())) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
