use std::process::ExitCode;

use chirp_oac_cli::{run, Cli};
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("chirp-oac: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
