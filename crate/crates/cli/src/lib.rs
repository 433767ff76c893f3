//! Library side of the `qnewton` command-line tool: config loading, trace
//! CSV I/O, bench aggregation and the subcommand implementations.
//!
//! Every `cmd_*` function writes human-readable output to `out`, diagnostics
//! to `err`, and returns the process exit code.

pub mod bench;
pub mod commands;
pub mod config;
pub mod trace;

pub use commands::{cmd_bench, cmd_rate, cmd_run, cmd_solve_poly, SolvePolyArgs};
pub use config::RunConfig;
pub use trace::Trace;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_MAX_ITERATIONS: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_NUMERIC_FAILURE: i32 = 4;
/// `rate` exit code when the trace has too few usable iterates.
pub const EXIT_INSUFFICIENT_DATA: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] qnewton::Error),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

/// Configures stderr logging from `QNEWTON_LOG` (`off`, `info` or `debug`;
/// warnings only when unset).
pub fn init_logging() {
    let level = match std::env::var("QNEWTON_LOG").as_deref() {
        Ok("off") => log::LevelFilter::Off,
        Ok("info") => log::LevelFilter::Info,
        Ok("debug") => log::LevelFilter::Debug,
        _ => log::LevelFilter::Warn,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .target(env_logger::Target::Stderr)
        .try_init();
}
