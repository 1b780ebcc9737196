use std::process::ExitCode;

use clap::Parser;
use gradvac_cli::{run, Cli, LOG_ENV};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gradvac: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
