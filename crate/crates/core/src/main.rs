use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(cantor_cvt::cli::run(std::env::args_os()))
}
