use std::process::ExitCode;

const LOG_ENV: &str = "RAVEN_LOG_LEVEL";

fn main() -> ExitCode {
    if let Ok(level) = std::env::var(LOG_ENV) {
        if !matches!(level.as_str(), "error" | "warn" | "info" | "debug") {
            eprintln!("error: {LOG_ENV} must be one of error, warn, info, debug (got `{level}`)");
            return ExitCode::from(1);
        }
    }
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    ExitCode::from(raven_core::cli::run(std::env::args_os()))
}
