//! Experiment harness for target-space surrogate optimization: JSON
//! configurations, a parallel runner writing per-run CSVs, cost reports and
//! the acceptance checks.

pub mod config;
pub mod metrics;
pub mod presets;
pub mod report;
pub mod runner;
pub mod verify;

pub use config::{derive_seed, BatchSize, DatasetSource, ExperimentConfig, LossConfig, RunEntry};
pub use runner::{run_experiment, ExperimentOutput};
