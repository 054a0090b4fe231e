//! Experiment runner for radial-transport variational inference: run
//! configurations and presets, parameter sweeps and a fast self-check.

pub mod config;
pub mod error;
pub mod presets;
pub mod run;
pub mod sweep;
pub mod validate;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
