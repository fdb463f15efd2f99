use std::process::ExitCode;

use clap::Parser;
use qvar_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("qvar: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
