//! Iterative truth and reliability estimation over client updates.
//!
//! Each model coordinate is a numeric task answered by every client. Starting
//! from unit reliabilities and the coordinate-wise median as the truth, the
//! loop alternates two exact block minimizations of
//!
//! ```text
//!     sum_i r_i * d(truth, delta_i)      subject to  sum_i exp(-r_i) = 1
//! ```
//!
//! 1. reliabilities given the truth: `r_i = -ln(d_i / sum_k d_k)`;
//! 2. truth given reliabilities: `truth = sum_i r_i * delta_i / sum_i r_i`.
//!
//! With the default squared Euclidean `d` both steps minimize the objective,
//! so the objective trace never increases. [`Distance::Euclidean`] is kept for
//! comparison runs; it reuses the same updates but loses the descent guarantee.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::params::{self, ParameterVector};
use crate::update::{ClientId, ClientUpdate};

/// Distance between the inferred truth and one client's update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Distance {
    /// Sum over coordinates of squared differences.
    #[default]
    SquaredEuclidean,
    /// Square root of the above.
    Euclidean,
}

impl Distance {
    #[inline]
    pub fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        let sq = params::squared_distance_slices(a, b);
        match self {
            Distance::SquaredEuclidean => sq,
            Distance::Euclidean => libm::sqrt(sq),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TruthInferenceConfig {
    pub max_iterations: usize,
    /// Stop once `|truth_new - truth_old| < convergence_tol * |truth_old|`.
    pub convergence_tol: f64,
    /// Lower bound substituted for distances below it, so a client that sits
    /// exactly on the truth still has a finite reliability.
    pub distance_floor: f64,
    pub distance: Distance,
}

impl Default for TruthInferenceConfig {
    fn default() -> Self {
        TruthInferenceConfig {
            max_iterations: 100,
            convergence_tol: 1e-6,
            distance_floor: 1e-12,
            distance: Distance::SquaredEuclidean,
        }
    }
}

impl TruthInferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::invalid("max_iterations", "must be at least 1"));
        }
        if !(self.convergence_tol > 0.0 && self.convergence_tol.is_finite()) {
            return Err(Error::invalid(
                "convergence_tol",
                "must be positive and finite",
            ));
        }
        if !(self.distance_floor > 0.0 && self.distance_floor.is_finite()) {
            return Err(Error::invalid(
                "distance_floor",
                "must be positive and finite",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruthInferenceResult {
    pub truth: ParameterVector,
    pub reliabilities: BTreeMap<ClientId, f64>,
    pub iterations_run: usize,
    pub converged: bool,
    /// Objective value after each reliability step.
    pub objective_trace: Vec<f64>,
}

/// Vector-level result, reliabilities in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct InferredTruth {
    pub truth: ParameterVector,
    pub reliabilities: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
}

/// `r_i = -ln(max(d_i, floor) / sum_k max(d_k, floor))`.
///
/// Results are clamped at zero: a single dominant distance can round the ratio
/// to exactly one and produce `-0.0`.
pub fn reliabilities_from_distances(distances: &[f64], floor: f64) -> Vec<f64> {
    let floored: Vec<f64> = distances.iter().map(|d| d.max(floor)).collect();
    let total: f64 = floored.iter().sum();
    floored
        .iter()
        .map(|d| (-libm::log(d / total)).max(0.0))
        .collect()
}

/// Runs truth inference on client updates.
///
/// Updates are processed in ascending client-id order whatever order they are
/// passed in, so permuting the input only permutes the returned map.
pub fn infer(updates: &[ClientUpdate], cfg: &TruthInferenceConfig) -> Result<TruthInferenceResult> {
    let order = sorted_by_client(updates)?;
    let vectors: Vec<&[f64]> = order.iter().map(|&i| updates[i].delta.as_slice()).collect();
    let inferred = infer_vectors(&vectors, cfg)?;
    let reliabilities = order
        .iter()
        .zip(&inferred.reliabilities)
        .map(|(&i, &r)| (updates[i].client_id, r))
        .collect();
    Ok(TruthInferenceResult {
        truth: inferred.truth,
        reliabilities,
        iterations_run: inferred.iterations_run,
        converged: inferred.converged,
        objective_trace: inferred.objective_trace,
    })
}

/// Truth inference over raw vectors, in the order given.
pub fn infer_vectors<V: AsRef<[f64]>>(
    vectors: &[V],
    cfg: &TruthInferenceConfig,
) -> Result<InferredTruth> {
    cfg.validate()?;
    if vectors.len() < 2 {
        return Err(Error::TooFew {
            what: "updates for truth inference",
            needed: 2,
            got: vectors.len(),
        });
    }
    params::common_dim(vectors, "update list")?;

    let mut truth = params::coordinate_median(vectors)?;
    let mut reliabilities = alloc::vec![1.0; vectors.len()];
    let mut trace = Vec::new();
    let mut distances = alloc::vec![0.0; vectors.len()];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        iterations += 1;

        for (d, v) in distances.iter_mut().zip(vectors) {
            *d = cfg
                .distance
                .eval(truth.as_slice(), v.as_ref())
                .max(cfg.distance_floor);
        }
        reliabilities = reliabilities_from_distances(&distances, cfg.distance_floor);
        trace.push(
            reliabilities
                .iter()
                .zip(&distances)
                .map(|(r, d)| r * d)
                .sum(),
        );

        let next = weighted_truth(vectors, &reliabilities)?;
        let change = libm::sqrt(params::squared_distance_slices(
            next.as_slice(),
            truth.as_slice(),
        ));
        let scale = truth.norm();
        truth = next;
        if change <= cfg.convergence_tol * scale {
            converged = true;
            break;
        }
    }

    Ok(InferredTruth {
        truth,
        reliabilities,
        iterations_run: iterations,
        converged,
        objective_trace: trace,
    })
}

/// `sum_i r_i * v_i / sum_i r_i`.
pub fn weighted_truth<V: AsRef<[f64]>>(
    vectors: &[V],
    reliabilities: &[f64],
) -> Result<ParameterVector> {
    let total: f64 = reliabilities.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::NonFinite("truth update (reliabilities sum to zero)"));
    }
    let weights: Vec<f64> = reliabilities.iter().map(|r| r / total).collect();
    params::weighted_sum(vectors, &weights)
}

/// Indices of `updates` in ascending client-id order. Duplicate ids are an error.
pub(crate) fn sorted_by_client(updates: &[ClientUpdate]) -> Result<Vec<usize>> {
    let mut order: Vec<usize> = (0..updates.len()).collect();
    order.sort_by_key(|&i| updates[i].client_id);
    for w in order.windows(2) {
        if updates[w[0]].client_id == updates[w[1]].client_id {
            return Err(Error::invalid(
                "updates",
                alloc::format!("client {} submitted twice", updates[w[0]].client_id),
            ));
        }
    }
    Ok(order)
}
