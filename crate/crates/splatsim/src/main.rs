use std::process::ExitCode;

fn main() -> ExitCode {
    splatsim::cli::run()
}
