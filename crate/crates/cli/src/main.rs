use std::process::ExitCode;

use clap::Parser;
use ncycle_cli::{configure_threads, prepare, Cli, CliError};

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let (spec, doc) = prepare(cli)?;
    spec.emit(&doc)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
