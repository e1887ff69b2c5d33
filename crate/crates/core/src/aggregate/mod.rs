//! Server-side aggregation rules.
//!
//! Every rule takes one round's [`ClientUpdate`]s and returns the vector to add
//! to the global weights. Inputs are sorted by client id before any reduction,
//! so all rules are invariant to the order in which updates arrive.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::params::ParameterVector;
use crate::truth::TruthInferenceConfig;
use crate::update::{ClientId, ClientUpdate};

mod basic;
mod krum;
mod robust;
mod temporal;

pub use basic::{fed_avg, median_agg, trimmed_mean_agg};
pub use krum::{krum, krum_scores};
pub use robust::{reliability_band, robust_fed, robust_fed_plus, Band};
pub use temporal::{
    augment_dynamic, augment_static, delta_stats, robust_fed_t, DeltaStats, TemporalMode,
    TemporalState, ThresholdRule,
};

/// Result of one aggregation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AggregationOutcome {
    /// The quantity added to the global weights.
    pub global_delta: ParameterVector,
    /// Per-client reliability, for the truth-inference based rules.
    pub reliabilities: Option<BTreeMap<ClientId, f64>>,
    /// Clients whose updates entered the aggregate, for rules that select.
    pub candidates: Option<BTreeSet<ClientId>>,
    pub diagnostics: BTreeMap<String, f64>,
}

impl AggregationOutcome {
    pub(crate) fn plain(global_delta: ParameterVector) -> Self {
        AggregationOutcome {
            global_delta,
            ..Default::default()
        }
    }

    pub(crate) fn diag(&mut self, key: &str, value: f64) {
        self.diagnostics.insert(String::from(key), value);
    }
}

/// How reliability weights `r_i * alpha_i` enter the global update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Weighting {
    /// Divide by `sum r_i * alpha_i`, so the weights sum to one and equal
    /// reliabilities reduce to FedAvg.
    #[default]
    Normalized,
    /// Use `r_i * alpha_i` as is. The step grows with the reliability scale.
    Raw,
}

/// Aggregation rules selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "String", into = "String"))]
pub enum AggregatorKind {
    FedAvg,
    Median,
    TrimmedMean,
    Krum,
    MultiKrum,
    RobustFed,
    RobustFedPlus,
    RobustFedT,
}

impl AggregatorKind {
    pub const ALL: [AggregatorKind; 8] = [
        AggregatorKind::FedAvg,
        AggregatorKind::Median,
        AggregatorKind::TrimmedMean,
        AggregatorKind::Krum,
        AggregatorKind::MultiKrum,
        AggregatorKind::RobustFed,
        AggregatorKind::RobustFedPlus,
        AggregatorKind::RobustFedT,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AggregatorKind::FedAvg => "fedavg",
            AggregatorKind::Median => "median",
            AggregatorKind::TrimmedMean => "trimmed_mean",
            AggregatorKind::Krum => "krum",
            AggregatorKind::MultiKrum => "multi_krum",
            AggregatorKind::RobustFed => "robustfed",
            AggregatorKind::RobustFedPlus => "robustfed_plus",
            AggregatorKind::RobustFedT => "robustfed_t",
        }
    }

    /// Whether the rule produces per-client reliabilities.
    pub fn infers_reliability(self) -> bool {
        matches!(
            self,
            AggregatorKind::RobustFed | AggregatorKind::RobustFedPlus | AggregatorKind::RobustFedT
        )
    }
}

impl fmt::Display for AggregatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AggregatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AggregatorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::invalid(
                    "aggregator",
                    alloc::format!(
                        "unknown aggregator {s:?} (expected one of fedavg, median, trimmed_mean, \
                         krum, multi_krum, robustfed, robustfed_plus, robustfed_t)"
                    ),
                )
            })
    }
}

impl TryFrom<String> for AggregatorKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<AggregatorKind> for String {
    fn from(k: AggregatorKind) -> String {
        String::from(k.name())
    }
}

/// Resolved parameters for every rule; each rule reads only its own fields.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatorParams {
    pub trim_k: usize,
    pub krum_f: usize,
    /// Number of updates Multi-Krum averages; `None` uses `count - f - 2`.
    pub multi_krum_m: Option<usize>,
    pub truth: TruthInferenceConfig,
    pub weighting: Weighting,
    pub temporal_mode: TemporalMode,
    pub threshold_rule: ThresholdRule,
}

impl Default for AggregatorParams {
    fn default() -> Self {
        AggregatorParams {
            trim_k: 0,
            krum_f: 0,
            multi_krum_m: None,
            truth: TruthInferenceConfig::default(),
            weighting: Weighting::Normalized,
            temporal_mode: TemporalMode::Static,
            threshold_rule: ThresholdRule::default(),
        }
    }
}

/// A configured aggregation rule plus the cross-round state it needs.
#[derive(Debug, Clone)]
pub struct Aggregator {
    kind: AggregatorKind,
    params: AggregatorParams,
    state: TemporalState,
}

impl Aggregator {
    pub fn new(kind: AggregatorKind, params: AggregatorParams) -> Self {
        Aggregator {
            kind,
            params,
            state: TemporalState::default(),
        }
    }

    pub fn kind(&self) -> AggregatorKind {
        self.kind
    }

    pub fn params(&self) -> &AggregatorParams {
        &self.params
    }

    pub fn temporal_state(&self) -> &TemporalState {
        &self.state
    }

    pub fn aggregate(&mut self, updates: &[ClientUpdate]) -> Result<AggregationOutcome> {
        let p = &self.params;
        match self.kind {
            AggregatorKind::FedAvg => fed_avg(updates),
            AggregatorKind::Median => median_agg(updates),
            AggregatorKind::TrimmedMean => trimmed_mean_agg(updates, p.trim_k),
            AggregatorKind::Krum => krum(updates, p.krum_f, 1),
            AggregatorKind::MultiKrum => {
                let m = match p.multi_krum_m {
                    Some(m) => m,
                    None => updates.len().saturating_sub(p.krum_f + 2).max(1),
                };
                krum(updates, p.krum_f, m)
            }
            AggregatorKind::RobustFed => robust_fed(updates, &p.truth, p.weighting),
            AggregatorKind::RobustFedPlus => robust_fed_plus(updates, &p.truth, p.weighting),
            AggregatorKind::RobustFedT => robust_fed_t(
                updates,
                &mut self.state,
                &p.truth,
                p.temporal_mode,
                &p.threshold_rule,
                p.weighting,
            ),
        }
    }
}

/// Deltas of `updates` in ascending client-id order, with the matching ids.
pub(crate) fn sorted_updates(updates: &[ClientUpdate]) -> Result<Vec<&ClientUpdate>> {
    let order = crate::truth::sorted_by_client(updates)?;
    let sorted: Vec<&ClientUpdate> = order.into_iter().map(|i| &updates[i]).collect();
    if let Some(first) = sorted.first() {
        let dim = first.delta.dim();
        for u in &sorted[1..] {
            crate::params::check_dim(dim, u.delta.dim())?;
        }
    }
    Ok(sorted)
}

pub(crate) fn require(updates: &[ClientUpdate], needed: usize, what: &'static str) -> Result<()> {
    if updates.len() < needed {
        if updates.is_empty() {
            return Err(Error::Empty("update list"));
        }
        return Err(Error::TooFew {
            what,
            needed,
            got: updates.len(),
        });
    }
    Ok(())
}
