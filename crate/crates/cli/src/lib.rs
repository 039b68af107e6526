//! Experiment runner for partition of unity classifiers.
//!
//! Experiments are TOML files (see `configs/`). Each run writes one JSON
//! line of metrics per seed, optionally a model file and a 2-D grid export.

pub mod config;
pub mod density;
pub mod error;
pub mod experiment;
pub mod export;
pub mod model_file;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use experiment::{ablate, run_and_write, run_experiment, MetricsRecord, Sweep};
pub use model_file::ModelFile;
