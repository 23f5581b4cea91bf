//! The `srclass` command-line tool: fit and apply single models, run
//! replicate benchmark studies and tally which classifier won them.

pub mod benchmark;
pub mod commands;
pub mod config;
pub mod records;

pub use benchmark::run_benchmark;
pub use commands::{cmd_benchmark, cmd_fit, cmd_predict, cmd_tally, FitArgs};
pub use config::BenchmarkConfig;
pub use records::{tally, ReplicateRecord};
