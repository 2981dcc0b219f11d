//! Command-line workbench around the `qdrank` library: synthetic data
//! generation, query clustering, training, evaluation and sweeps.

pub mod commands;
pub mod config;

pub use commands::*;
pub use config::RunConfig;

use qdrank::Error;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// Process exit status for a failed command.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        Error::Numeric(_) => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}
