use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = tvreg_cli::Cli::parse();
    match tvreg_cli::run(cli) {
        Ok(()) => ExitCode::from(tvreg_cli::exit::OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
