//! Experiment orchestration for the `textcause` command-line tool.

pub mod commands;
pub mod config;
pub mod experiment;
pub mod report;

pub use config::ExperimentConfig;
pub use experiment::{run_benchmark, run_crossing, run_sensitivity, run_verify, ResultRow};
