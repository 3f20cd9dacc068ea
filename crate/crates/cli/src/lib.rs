//! Experiment runner for flexible-joint impedance control: configuration loading,
//! the frequency and time-domain studies, and their CSV output.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

pub use config::ExperimentConfig;
pub use error::{exit, CliError};
