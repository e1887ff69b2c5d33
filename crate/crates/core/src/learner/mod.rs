//! Local training: datasets, IID sharding, and two small classifiers
//! (softmax regression and a one-hidden-layer ReLU MLP) with analytic
//! cross-entropy gradients.

mod dataset;
mod model;
mod train;

pub use dataset::{partition_iid, Dataset};
pub use model::{evaluate, Evaluation, Layout, ModelKind, ModelSpec, Segment};
pub use train::{local_train, LocalTraining};
