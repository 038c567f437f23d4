use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Ok(v) = std::env::var("CIFTREE_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("warning: could not size the thread pool: {e}");
                }
            }
            _ => {
                eprintln!("error: CIFTREE_THREADS must be a positive integer, got '{v}'");
                return ExitCode::from(ciftree::cli::EXIT_VALIDATION);
            }
        }
    }
    ciftree::cli::run(std::env::args().collect())
}
