use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use super::{require, sorted_updates, AggregationOutcome};
use crate::error::{Error, Result};
use crate::params::{self, ParameterVector};
use crate::update::{ClientId, ClientUpdate};

/// Krum score of every update, in ascending client-id order: the sum of
/// squared Euclidean distances to its `count - f - 2` nearest other updates.
pub fn krum_scores(updates: &[ClientUpdate], f: usize) -> Result<Vec<(ClientId, f64)>> {
    let sorted = sorted_updates(updates)?;
    let count = sorted.len();
    if count < f + 3 {
        return Err(Error::TooFew {
            what: "updates for krum (need f + 3)",
            needed: f + 3,
            got: count,
        });
    }
    let neighbours = count - f - 2;

    let mut dist = alloc::vec![0.0; count * count];
    for i in 0..count {
        for j in (i + 1)..count {
            let d = params::squared_distance_slices(
                sorted[i].delta.as_slice(),
                sorted[j].delta.as_slice(),
            );
            dist[i * count + j] = d;
            dist[j * count + i] = d;
        }
    }

    let mut row = Vec::with_capacity(count - 1);
    Ok((0..count)
        .map(|i| {
            row.clear();
            row.extend((0..count).filter(|&j| j != i).map(|j| dist[i * count + j]));
            row.sort_unstable_by(f64::total_cmp);
            (sorted[i].client_id, row[..neighbours].iter().sum())
        })
        .collect())
}

/// Krum (`multi_m == 1`) returns the lowest-score update verbatim; Multi-Krum
/// (`multi_m > 1`) returns the unweighted mean of the `multi_m` lowest-score
/// updates. Ties go to the lower client id.
pub fn krum(updates: &[ClientUpdate], f: usize, multi_m: usize) -> Result<AggregationOutcome> {
    require(updates, 1, "updates for krum")?;
    let scores = krum_scores(updates, f)?;
    let max_m = updates.len() - f - 2;
    if multi_m < 1 || multi_m > max_m {
        return Err(Error::invalid(
            "multi_m",
            alloc::format!(
                "{multi_m} outside 1..={max_m} for {} updates and f = {f}",
                updates.len()
            ),
        ));
    }

    let mut ranked: Vec<usize> = (0..scores.len()).collect();
    // stable sort keeps id order among equal scores
    ranked.sort_by(|&a, &b| scores[a].1.total_cmp(&scores[b].1));
    let chosen: BTreeSet<ClientId> = ranked[..multi_m].iter().map(|&i| scores[i].0).collect();

    let sorted = sorted_updates(updates)?;
    let selected: Vec<&ParameterVector> = sorted
        .iter()
        .filter(|u| chosen.contains(&u.client_id))
        .map(|u| &u.delta)
        .collect();
    let global_delta = if multi_m == 1 {
        selected[0].clone()
    } else {
        params::mean(&selected)?
    };

    let mut outcome = AggregationOutcome::plain(global_delta);
    outcome.candidates = Some(chosen);
    outcome.diag("krum_f", f as f64);
    outcome.diag("krum_m", multi_m as f64);
    Ok(outcome)
}
