use std::process::ExitCode;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let (code, out) = geomcarve::cli::run_command(&args);
    print!("{out}");
    ExitCode::from(code.clamp(0, u8::MAX as i32) as u8)
}
