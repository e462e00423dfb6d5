use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use srctrace::cli::{exit_code, run, Cli};

fn main() -> ExitCode {
    let level = std::env::var("SIGNAL_LOG").unwrap_or_else(|_| "error".into());
    env_logger::Builder::new().parse_filters(&level).init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
