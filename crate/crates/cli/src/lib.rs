//! Driver for the `nestmlmc` binary: JSON configs in, JSON and CSV results out.
//!
//! Every result file embeds the resolved config it was produced from, and a
//! result file can itself be passed as `--config` to rerun it.

pub mod auto;
pub mod commands;
pub mod config;
pub mod error;
pub mod models;
pub mod output;

pub use commands::{run_calibrate, run_estimate, run_rates, run_sweep};
pub use config::{Overrides, RunConfig, SweepConfig};
pub use error::CliError;
