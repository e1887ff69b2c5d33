//! Temporal statistics for the history-aware RobustFed variant.
//!
//! Summary statistics of each client's previous update are appended to its
//! current delta as extra truth-inference tasks. They only influence the
//! reliability scores; the aggregate itself is built from the raw deltas.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::robust::pruned;
use super::{require, sorted_updates, AggregationOutcome, Weighting};
use crate::error::{Error, Result};
use crate::params;
use crate::truth::{self, TruthInferenceConfig};
use crate::update::{ClientId, ClientUpdate};

/// Which statistics are appended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TemporalMode {
    /// Same participants every round: large/small counts, median, mean.
    #[default]
    Static,
    /// Sampled participants: median and mean only.
    Dynamic,
}

/// Decides which coordinates of a delta count as "large" or "small".
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(
    feature = "serde",
    serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)
)]
pub enum ThresholdRule {
    /// Large iff `x > mean + k * std`, small iff `x < mean - k * std`, using
    /// the delta's own mean and population standard deviation.
    MeanStd { k: f64 },
    /// Large iff `x > large`, small iff `x < small`.
    Fixed { large: f64, small: f64 },
}

impl Default for ThresholdRule {
    fn default() -> Self {
        ThresholdRule::MeanStd { k: 1.0 }
    }
}

impl ThresholdRule {
    fn bounds(&self, mean: f64, std: f64) -> (f64, f64) {
        match *self {
            ThresholdRule::MeanStd { k } => (mean - k * std, mean + k * std),
            ThresholdRule::Fixed { large, small } => (small, large),
        }
    }
}

/// Summary of one delta. Counts are divided by the delta's dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaStats {
    pub large_fraction: f64,
    pub small_fraction: f64,
    pub median: f64,
    pub mean: f64,
}

impl DeltaStats {
    fn static_coords(&self) -> [f64; 4] {
        [
            self.large_fraction,
            self.small_fraction,
            self.median,
            self.mean,
        ]
    }

    fn dynamic_coords(&self) -> [f64; 2] {
        [self.median, self.mean]
    }
}

pub fn delta_stats(values: &[f64], rule: &ThresholdRule) -> Result<DeltaStats> {
    let (mean, std) = params::mean_std(values).ok_or(Error::Empty("delta"))?;
    let (small, large) = rule.bounds(mean, std);
    let n = values.len() as f64;
    let large_count = values.iter().filter(|&&x| x > large).count();
    let small_count = values.iter().filter(|&&x| x < small).count();
    let mut scratch = values.to_vec();
    let median = params::median_in_place(&mut scratch).ok_or(Error::Empty("delta"))?;
    Ok(DeltaStats {
        large_fraction: large_count as f64 / n,
        small_fraction: small_count as f64 / n,
        median,
        mean,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub round: u32,
    pub dim: usize,
    pub stats: DeltaStats,
}

/// Most recent recorded statistics per client.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TemporalState {
    entries: BTreeMap<ClientId, HistoryEntry>,
    next_round: u32,
}

impl TemporalState {
    pub fn get(&self, client: ClientId) -> Option<&HistoryEntry> {
        self.entries.get(&client)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Round the next aggregation must be at or after.
    pub fn next_round(&self) -> u32 {
        self.next_round
    }

    pub fn clients(&self) -> impl Iterator<Item = ClientId> + '_ {
        self.entries.keys().copied()
    }

    /// Records the statistics of `updates` as each client's latest history.
    pub fn record(&mut self, updates: &[ClientUpdate], rule: &ThresholdRule) -> Result<()> {
        let round = common_round(updates)?;
        for u in updates {
            let stats = delta_stats(u.delta.as_slice(), rule)?;
            self.entries.insert(
                u.client_id,
                HistoryEntry {
                    round,
                    dim: u.delta.dim(),
                    stats,
                },
            );
        }
        self.next_round = round + 1;
        Ok(())
    }

    /// History for `u`, checked against its round and dimension.
    fn lookup(&self, u: &ClientUpdate) -> Result<Option<&HistoryEntry>> {
        match self.entries.get(&u.client_id) {
            None => Ok(None),
            Some(e) => {
                params::check_dim(e.dim, u.delta.dim())?;
                if e.round >= u.round {
                    return Err(Error::invalid(
                        "round",
                        alloc::format!(
                            "client {} has history from round {} but submitted for round {}",
                            u.client_id,
                            e.round,
                            u.round
                        ),
                    ));
                }
                Ok(Some(e))
            }
        }
    }
}

fn common_round(updates: &[ClientUpdate]) -> Result<u32> {
    let round = updates.first().ok_or(Error::Empty("update list"))?.round;
    if updates.iter().any(|u| u.round != round) {
        return Err(Error::invalid("round", "updates from different rounds"));
    }
    Ok(round)
}

fn augment(
    updates: &[ClientUpdate],
    state: &TemporalState,
    rule: &ThresholdRule,
    mode: TemporalMode,
) -> Result<Vec<ClientUpdate>> {
    if updates.is_empty() {
        return Ok(Vec::new());
    }
    common_round(updates)?;
    let history: Vec<Option<&HistoryEntry>> = updates
        .iter()
        .map(|u| state.lookup(u))
        .collect::<Result<_>>()?;
    if history.iter().all(Option::is_none) {
        return Ok(updates.to_vec());
    }

    // Neutral fill for clients without history: the same statistics computed
    // over every value submitted this round.
    let pooled: Vec<f64> = updates
        .iter()
        .flat_map(|u| u.delta.as_slice().iter().copied())
        .collect();
    let neutral = delta_stats(&pooled, rule)?;

    updates
        .iter()
        .zip(history)
        .map(|(u, h)| {
            let stats = h.map_or(neutral, |e| e.stats);
            let delta = match mode {
                TemporalMode::Static => u.delta.extended(&stats.static_coords())?,
                TemporalMode::Dynamic => u.delta.extended(&stats.dynamic_coords())?,
            };
            Ok(ClientUpdate { delta, ..u.clone() })
        })
        .collect()
}

/// Appends (large fraction, small fraction, median, mean) of each client's
/// previous delta. Passes updates through unchanged when no client has history.
pub fn augment_static(
    updates: &[ClientUpdate],
    state: &TemporalState,
    rule: &ThresholdRule,
) -> Result<Vec<ClientUpdate>> {
    augment(updates, state, rule, TemporalMode::Static)
}

/// Appends (median, mean) of each client's most recent recorded delta. Clients
/// never seen before get the pooled statistics of the current round.
pub fn augment_dynamic(
    updates: &[ClientUpdate],
    state: &TemporalState,
) -> Result<Vec<ClientUpdate>> {
    augment(
        updates,
        state,
        &ThresholdRule::default(),
        TemporalMode::Dynamic,
    )
}

/// History-aware band-pruned aggregation. Commits this round's statistics to
/// `state` only after the aggregate has been computed successfully.
pub fn robust_fed_t(
    updates: &[ClientUpdate],
    state: &mut TemporalState,
    cfg: &TruthInferenceConfig,
    mode: TemporalMode,
    rule: &ThresholdRule,
    weighting: Weighting,
) -> Result<AggregationOutcome> {
    require(updates, 3, "updates for robustfed_t")?;
    let sorted = sorted_updates(updates)?;
    super::basic::check_alphas(&sorted)?;
    let owned: Vec<ClientUpdate> = sorted.iter().map(|&u| u.clone()).collect();
    if owned[0].round < state.next_round() {
        return Err(Error::invalid("round", "aggregation round went backwards"));
    }

    let augmented = augment(&owned, state, rule, mode)?;
    let vectors: Vec<&[f64]> = augmented.iter().map(|u| u.delta.as_slice()).collect();
    let inferred = truth::infer_vectors(&vectors, cfg)?;
    let mut outcome = pruned(&sorted, &inferred, weighting)?;
    let extra = augmented[0].delta.dim() - owned[0].delta.dim();
    outcome.diag("temporal_coords", extra as f64);

    state.record(&owned, rule)?;
    Ok(outcome)
}
