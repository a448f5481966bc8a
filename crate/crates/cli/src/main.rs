use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(phasesync_cli::run(std::env::args_os()))
}
