use std::process::ExitCode;

fn main() -> ExitCode {
    roleplex::cli::main_with_args(std::env::args_os())
}
