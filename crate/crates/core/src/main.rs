use std::process::ExitCode;

fn main() -> ExitCode {
    let code = second_degree::cli::main_with_args(std::env::args_os());
    ExitCode::from(code as u8)
}
