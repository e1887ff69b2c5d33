use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::model::Workspace;
use super::{Dataset, ModelSpec};
use crate::error::{Error, Result};
use crate::params::ParameterVector;
use crate::update::{ClientId, ClientUpdate};

/// Result of one client's local training.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTraining {
    /// `final_weights - global_weights`.
    pub delta: ParameterVector,
    pub num_examples: usize,
    /// Optimizer steps taken over all epochs.
    pub steps: usize,
    /// Largest mini-batch gradient norm seen.
    pub max_grad_norm: f64,
    /// Mean loss of the last mini-batch, before its step.
    pub last_loss: f64,
}

impl LocalTraining {
    /// Upper bound on `|delta|` for SGD with momentum `mu`: the velocity never
    /// exceeds `G / (1 - mu)`, so `|delta| <= lr * steps * G / (1 - mu)`.
    pub fn norm_bound(&self, spec: &ModelSpec) -> f64 {
        spec.learning_rate * self.steps as f64 * self.max_grad_norm / (1.0 - spec.momentum)
    }

    /// Wraps the delta as an update with sample weight `alpha`.
    pub fn into_update(self, client_id: ClientId, round: u32, alpha: f64) -> ClientUpdate {
        ClientUpdate::new(client_id, round, self.delta, alpha)
    }
}

/// Runs `spec.local_epochs` epochs of mini-batch SGD with momentum from
/// `global`, reshuffling the shard under `rng` at the start of every epoch.
pub fn local_train<R: Rng + ?Sized>(
    global: &ParameterVector,
    shard: &Dataset,
    spec: &ModelSpec,
    rng: &mut R,
) -> Result<LocalTraining> {
    spec.validate()?;
    spec.layout().check(global.as_slice())?;
    if shard.is_empty() {
        return Err(Error::Empty("shard"));
    }

    let n = global.dim();
    let mut weights = global.as_slice().to_vec();
    let mut velocity = alloc::vec![0.0; n];
    let mut grad = alloc::vec![0.0; n];
    let mut ws = Workspace::default();
    let mut order: Vec<usize> = (0..shard.len()).collect();
    let mut steps = 0;
    let mut max_grad_norm = 0.0f64;
    let mut last_loss = 0.0;

    for _ in 0..spec.local_epochs {
        order.shuffle(rng);
        for batch in order.chunks(spec.batch_size) {
            last_loss = spec.loss_and_gradient_with(&weights, shard, batch, &mut grad, &mut ws)?;
            let g_norm = libm::sqrt(grad.iter().map(|g| g * g).sum());
            max_grad_norm = max_grad_norm.max(g_norm);
            for ((w, v), g) in weights.iter_mut().zip(&mut velocity).zip(&grad) {
                *v = spec.momentum * *v + g;
                *w -= spec.learning_rate * *v;
            }
            steps += 1;
        }
    }

    let delta: Vec<f64> = weights
        .iter()
        .zip(global.as_slice())
        .map(|(w, g)| w - g)
        .collect();
    Ok(LocalTraining {
        delta: ParameterVector::new(delta).map_err(|_| Error::NonFinite("local training"))?,
        num_examples: shard.len(),
        steps,
        max_grad_norm,
        last_loss,
    })
}
