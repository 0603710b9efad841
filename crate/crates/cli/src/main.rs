use std::process::ExitCode;

fn main() -> ExitCode {
    quasisol_cli::run_cli(std::env::args_os())
}
