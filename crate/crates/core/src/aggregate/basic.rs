use alloc::vec::Vec;

use super::{require, sorted_updates, AggregationOutcome};
use crate::error::{Error, Result};
use crate::params::{self, ParameterVector};
use crate::update::ClientUpdate;

const ALPHA_SUM_TOL: f64 = 1e-9;

pub(crate) fn check_alphas(updates: &[&ClientUpdate]) -> Result<()> {
    for u in updates {
        if !(u.alpha > 0.0 && u.alpha <= 1.0) {
            return Err(Error::invalid(
                "alpha",
                alloc::format!(
                    "client {} has alpha {} outside (0, 1]",
                    u.client_id,
                    u.alpha
                ),
            ));
        }
    }
    let sum: f64 = updates.iter().map(|u| u.alpha).sum();
    if (sum - 1.0).abs() > ALPHA_SUM_TOL {
        return Err(Error::invalid(
            "alpha",
            alloc::format!("alphas sum to {sum}, not 1"),
        ));
    }
    Ok(())
}

/// Sample-weighted average `sum_i alpha_i * delta_i`.
pub fn fed_avg(updates: &[ClientUpdate]) -> Result<AggregationOutcome> {
    require(updates, 1, "updates for fedavg")?;
    let sorted = sorted_updates(updates)?;
    check_alphas(&sorted)?;
    let deltas: Vec<&ParameterVector> = sorted.iter().map(|u| &u.delta).collect();
    let alphas: Vec<f64> = sorted.iter().map(|u| u.alpha).collect();
    Ok(AggregationOutcome::plain(params::weighted_sum(
        &deltas, &alphas,
    )?))
}

/// Coordinate-wise median of the deltas; sample weights are ignored.
pub fn median_agg(updates: &[ClientUpdate]) -> Result<AggregationOutcome> {
    require(updates, 1, "updates for median")?;
    let sorted = sorted_updates(updates)?;
    let deltas: Vec<&ParameterVector> = sorted.iter().map(|u| &u.delta).collect();
    Ok(AggregationOutcome::plain(params::coordinate_median(
        &deltas,
    )?))
}

/// Per coordinate: drop the `trim_k` largest and `trim_k` smallest values and
/// average the rest (unweighted).
pub fn trimmed_mean_agg(updates: &[ClientUpdate], trim_k: usize) -> Result<AggregationOutcome> {
    require(updates, 1, "updates for trimmed mean")?;
    if 2 * trim_k >= updates.len() {
        return Err(Error::invalid(
            "trim_k",
            alloc::format!(
                "2 * {trim_k} must be below the update count {}",
                updates.len()
            ),
        ));
    }
    let sorted = sorted_updates(updates)?;
    let dim = sorted[0].delta.dim();
    let kept = (sorted.len() - 2 * trim_k) as f64;
    let mut column = Vec::with_capacity(sorted.len());
    let mut out = Vec::with_capacity(dim);
    for j in 0..dim {
        column.clear();
        column.extend(sorted.iter().map(|u| u.delta.as_slice()[j]));
        column.sort_unstable_by(f64::total_cmp);
        let sum: f64 = column[trim_k..column.len() - trim_k].iter().sum();
        out.push(sum / kept);
    }
    let mut outcome = AggregationOutcome::plain(ParameterVector::new(out)?);
    outcome.diag("trim_k", trim_k as f64);
    Ok(outcome)
}
