use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(rectrack::cli::run(std::env::args_os()))
}
