use std::process::ExitCode;

fn main() -> ExitCode {
    blockcorr_cli::run()
}
