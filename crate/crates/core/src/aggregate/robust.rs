use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use super::{require, sorted_updates, AggregationOutcome, Weighting};
use crate::error::{Error, Result};
use crate::params::{self, ParameterVector};
use crate::truth::{self, InferredTruth, TruthInferenceConfig};
use crate::update::{ClientId, ClientUpdate};

/// Reliability-weighted aggregate: truth inference over the deltas, then
/// `sum_i w_i * delta_i` with `w_i = r_i * alpha_i` (normalized by default).
pub fn robust_fed(
    updates: &[ClientUpdate],
    cfg: &TruthInferenceConfig,
    weighting: Weighting,
) -> Result<AggregationOutcome> {
    require(updates, 2, "updates for robustfed")?;
    let sorted = sorted_updates(updates)?;
    super::basic::check_alphas(&sorted)?;
    let deltas: Vec<&[f64]> = sorted.iter().map(|u| u.delta.as_slice()).collect();
    let inferred = truth::infer_vectors(&deltas, cfg)?;
    let all: Vec<usize> = (0..sorted.len()).collect();
    finish(&sorted, &inferred, &all, weighting)
}

/// [`robust_fed`] restricted to clients whose reliability lies within one
/// population standard deviation of the median reliability.
pub fn robust_fed_plus(
    updates: &[ClientUpdate],
    cfg: &TruthInferenceConfig,
    weighting: Weighting,
) -> Result<AggregationOutcome> {
    require(updates, 3, "updates for robustfed_plus")?;
    let sorted = sorted_updates(updates)?;
    super::basic::check_alphas(&sorted)?;
    let deltas: Vec<&[f64]> = sorted.iter().map(|u| u.delta.as_slice()).collect();
    let inferred = truth::infer_vectors(&deltas, cfg)?;
    pruned(&sorted, &inferred, weighting)
}

/// The `[median - std, median + std]` acceptance band over reliabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub median: f64,
    pub std: f64,
}

impl Band {
    pub fn lower(&self) -> f64 {
        self.median - self.std
    }

    pub fn upper(&self) -> f64 {
        self.median + self.std
    }

    pub fn contains(&self, r: f64) -> bool {
        self.lower() <= r && r <= self.upper()
    }
}

/// Median and population standard deviation of the reliabilities.
pub fn reliability_band(reliabilities: &[f64]) -> Option<Band> {
    let mut sorted = reliabilities.to_vec();
    let median = params::median_in_place(&mut sorted)?;
    let (_, std) = params::mean_std(reliabilities)?;
    Some(Band { median, std })
}

/// Band-prune and aggregate. `sorted` and `inferred.reliabilities` are aligned.
pub(crate) fn pruned(
    sorted: &[&ClientUpdate],
    inferred: &InferredTruth,
    weighting: Weighting,
) -> Result<AggregationOutcome> {
    let r = &inferred.reliabilities;
    let band = reliability_band(r).ok_or(Error::Empty("reliabilities"))?;
    let mut keep: Vec<usize> = (0..r.len()).filter(|&i| band.contains(r[i])).collect();
    let fallback = keep.is_empty();
    if fallback {
        // nearest to the median, lower id on ties
        let nearest = (0..r.len())
            .min_by(|&a, &b| {
                (r[a] - band.median)
                    .abs()
                    .total_cmp(&(r[b] - band.median).abs())
            })
            .unwrap_or(0);
        keep.push(nearest);
    }
    let mut outcome = finish(sorted, inferred, &keep, weighting)?;
    outcome.diag("band_median", band.median);
    outcome.diag("band_std", band.std);
    outcome.diag("pruned", (r.len() - keep.len()) as f64);
    if fallback {
        outcome.diag("empty_band_fallback", 1.0);
    }
    Ok(outcome)
}

/// Weighted aggregate over `keep` (indices into `sorted`), with reliabilities
/// and candidates filled in.
fn finish(
    sorted: &[&ClientUpdate],
    inferred: &InferredTruth,
    keep: &[usize],
    weighting: Weighting,
) -> Result<AggregationOutcome> {
    let r = &inferred.reliabilities;
    let raw: Vec<f64> = keep.iter().map(|&i| r[i] * sorted[i].alpha).collect();
    let total: f64 = raw.iter().sum();
    let mut zero_weight = false;
    let weights: Vec<f64> = match weighting {
        Weighting::Raw => raw,
        Weighting::Normalized if total > 0.0 => raw.iter().map(|w| w / total).collect(),
        Weighting::Normalized => {
            // every kept reliability is zero: fall back to sample weights
            zero_weight = true;
            let alpha_total: f64 = keep.iter().map(|&i| sorted[i].alpha).sum();
            keep.iter()
                .map(|&i| sorted[i].alpha / alpha_total)
                .collect()
        }
    };
    let deltas: Vec<&ParameterVector> = keep.iter().map(|&i| &sorted[i].delta).collect();
    let global_delta = params::weighted_sum(&deltas, &weights)?;

    let reliabilities: BTreeMap<ClientId, f64> = sorted
        .iter()
        .zip(r)
        .map(|(u, &r)| (u.client_id, r))
        .collect();
    let candidates: BTreeSet<ClientId> = keep.iter().map(|&i| sorted[i].client_id).collect();

    let mut outcome = AggregationOutcome::plain(global_delta);
    outcome.reliabilities = Some(reliabilities);
    outcome.candidates = Some(candidates);
    outcome.diag("truth_iterations", inferred.iterations_run as f64);
    outcome.diag(
        "truth_converged",
        if inferred.converged { 1.0 } else { 0.0 },
    );
    if zero_weight {
        outcome.diag("zero_weight_fallback", 1.0);
    }
    Ok(outcome)
}
