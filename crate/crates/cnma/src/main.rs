use std::process::ExitCode;

use cnma::CliError;

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    match cnma::cli::run(&argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Clap(e)) => {
            let _ = e.print();
            ExitCode::from(e.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Model(cnma_core::Error::Disconnected(_)) = e {
                eprintln!("hint: use --per-subnetwork for separate NMAs, or --model additive");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
