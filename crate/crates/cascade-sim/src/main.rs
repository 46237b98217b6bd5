use std::process::ExitCode;

fn main() -> ExitCode {
    cascade_sim::cli::run()
}
