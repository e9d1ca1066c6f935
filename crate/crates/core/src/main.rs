use std::process::ExitCode;

fn main() -> ExitCode {
    // MLRN_THREADS caps the worker pool; results are bit-identical at any
    // thread count, this only trades latency for cores.
    if let Ok(threads) = std::env::var("MLRN_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
            _ => {
                eprintln!("error: MLRN_THREADS must be a positive integer, got '{threads}'");
                return ExitCode::from(2);
            }
        }
    }
    ExitCode::from(mlrn::cli::run(std::env::args_os()))
}
