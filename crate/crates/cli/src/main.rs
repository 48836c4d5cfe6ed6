use std::process::ExitCode;

fn main() -> ExitCode {
    if let Err(e) = dirinfo_cli::configure_threads(std::env::var("DIRINFO_THREADS").ok().as_deref()) {
        eprintln!("dirinfo: {e}");
        return ExitCode::from(e.exit_code() as u8);
    }
    ExitCode::from(dirinfo_cli::main_with_args(std::env::args_os()) as u8)
}
