use std::process::ExitCode;

fn main() -> ExitCode {
    mtrbench::cli::main_with_args(std::env::args_os())
}
