#![no_std]

//! Reliability-weighted robust aggregation for federated learning.
//!
//! The server treats every model coordinate as a numeric crowdsourcing task
//! and every client as a worker. An iterative truth-inference loop estimates a
//! per-client reliability score, which the aggregators use to weight, prune,
//! or (with temporal statistics) re-score client updates before they touch
//! the global model.
//!
//! This crate is `no_std` and only needs `alloc`. Everything here is a pure
//! function of its inputs plus an explicitly passed RNG, so the simulator in
//! `robustfed-sim` can fan client work out to threads without changing results.
//!
//! Modules:
//! - [`params`]: dense parameter vectors and coordinate-wise statistics.
//! - [`truth`]: the truth/reliability fixed point used by every RobustFed variant.
//! - [`aggregate`]: FedAvg, median, trimmed mean, (Multi-)Krum and the RobustFed family.
//! - [`attack`]: label flipping, feature noise and Byzantine perturbation.
//! - [`learner`]: datasets, IID partitioning and small classifiers trained with SGD.
//! - [`rng`]: seeded, independent RNG substreams.

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod aggregate;
pub mod attack;
mod error;
pub mod learner;
pub mod params;
pub mod rng;
pub mod truth;
mod update;

pub use crate::aggregate::{AggregationOutcome, Aggregator, AggregatorKind, AggregatorParams};
pub use crate::attack::{AttackKind, AttackSpec};
pub use crate::error::{Error, Result};
pub use crate::learner::{Dataset, ModelKind, ModelSpec};
pub use crate::params::ParameterVector;
pub use crate::truth::{TruthInferenceConfig, TruthInferenceResult};
pub use crate::update::{ClientId, ClientUpdate};
