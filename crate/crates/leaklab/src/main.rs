use std::io::Write;
use std::process::ExitCode;

fn main() -> ExitCode {
    let mut out = std::io::stdout().lock();
    let code = leaklab::cli::run_from(std::env::args_os(), &mut out);
    let _ = out.flush();
    ExitCode::from(code)
}
