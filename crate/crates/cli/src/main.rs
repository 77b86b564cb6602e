use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    // Help and version exit 0, malformed command lines exit 2.
    let cli = hsched::Cli::try_parse_from(&argv).unwrap_or_else(|e| e.exit());
    match hsched::execute(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hsched: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
