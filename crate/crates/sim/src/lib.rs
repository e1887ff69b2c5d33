//! Federated learning simulator for the `robustfed-core` aggregators: data
//! loading, experiment configuration, the round loop, comparison suites and
//! the files they produce.

pub mod config;
pub mod data;
mod error;
pub mod output;
pub mod simulator;
pub mod suite;

pub use crate::config::{ExperimentConfig, Overrides};
pub use crate::error::{Result, SimError};
pub use crate::simulator::{run_experiment, run_with_data, Data, RoundRecord, RunResult};
pub use crate::suite::{run_suite, SuiteTable};
