use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match reic_cli::run_from(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = reic_cli::exit_code(&err);
            if let Some(usage) = err.downcast_ref::<reic_cli::UsageError>() {
                eprintln!("{usage}");
            } else {
                eprintln!("error: {err:#}");
            }
            ExitCode::from(code as u8)
        }
    }
}
