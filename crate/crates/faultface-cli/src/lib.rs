//! Library surface of the pipeline CLI so integration tests can drive
//! whole experiments in-process.

pub mod config;
pub mod pgm;
pub mod pipeline;
pub mod synth;

pub use config::{ConfigError, ExperimentConfig};
pub use pipeline::{run_experiment, CliError, CliResult, RunOutcome};
