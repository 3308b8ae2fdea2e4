use std::process::ExitCode;

fn main() -> ExitCode {
    let code = mcq_entropy::cli::main_with_args(std::env::args_os());
    ExitCode::from(code)
}
