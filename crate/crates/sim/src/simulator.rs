//! Round-by-round federated training.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::seq::index;
use rayon::prelude::*;
use robustfed_core::attack::{assign_adversaries, byzantine_perturb, poison_flip, poison_noise};
use robustfed_core::learner::{evaluate, local_train, partition_iid};
use robustfed_core::rng::{substream, Purpose};
use robustfed_core::{
    params, AggregationOutcome, Aggregator, AttackKind, ClientId, ClientUpdate, Dataset,
    ParameterVector,
};

use crate::config::{DataFormat, ExperimentConfig, Selection};
use crate::data;
use crate::error::{Result, SimError};

/// Train and test sets for one experiment.
#[derive(Debug, Clone)]
pub struct Data {
    pub train: Dataset,
    pub test: Dataset,
}

/// Reads the configured files and applies `max_train` / `max_test`.
pub fn load_data(cfg: &ExperimentConfig) -> Result<Data> {
    let classes = u32::try_from(cfg.model.num_classes)
        .map_err(|_| SimError::config("model.num_classes: too large"))?;
    let d = &cfg.data;
    let (train, test) = match d.format {
        DataFormat::Idx => (
            data::load_idx(&d.train_images, &d.train_labels, classes)?,
            data::load_idx(&d.test_images, &d.test_labels, classes)?,
        ),
        DataFormat::Csv => {
            let missing =
                || SimError::config("data.train_csv/test_csv: required when format = \"csv\"");
            (
                data::load_csv(
                    d.train_csv.as_ref().ok_or_else(missing)?,
                    classes,
                    d.csv_scale,
                )?,
                data::load_csv(
                    d.test_csv.as_ref().ok_or_else(missing)?,
                    classes,
                    d.csv_scale,
                )?,
            )
        }
    };
    let train = match d.max_train {
        Some(n) => train.truncated(n),
        None => train,
    };
    let test = match d.max_test {
        Some(n) => test.truncated(n),
        None => test,
    };
    Ok(Data { train, test })
}

/// One round's outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: u32,
    /// Ascending.
    pub selected: Vec<ClientId>,
    /// Adversaries among `selected`.
    pub malicious: Vec<ClientId>,
    pub reliabilities: Option<BTreeMap<ClientId, f64>>,
    pub candidates: Option<BTreeSet<ClientId>>,
    pub accuracy: f64,
    pub loss: f64,
    pub delta_norm: f64,
    pub diagnostics: BTreeMap<String, f64>,
    /// Seconds spent on the round. Not written to `rounds.csv`, which must be
    /// reproducible byte for byte.
    pub wall_time: f64,
}

impl RoundRecord {
    fn mean_reliability(&self, malicious: bool) -> Option<f64> {
        let r = self.reliabilities.as_ref()?;
        let values: Vec<f64> = r
            .iter()
            .filter(|(c, _)| self.malicious.contains(c) == malicious)
            .map(|(_, &v)| v)
            .collect();
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    }

    pub fn benign_mean_reliability(&self) -> Option<f64> {
        self.mean_reliability(false)
    }

    pub fn malicious_mean_reliability(&self) -> Option<f64> {
        self.mean_reliability(true)
    }

    /// Whether some selected adversary holds the round's highest reliability.
    /// `None` when the aggregator emits no reliabilities or no adversary took
    /// part.
    pub fn malicious_has_max_reliability(&self) -> Option<bool> {
        let r = self.reliabilities.as_ref()?;
        if self.malicious.is_empty() {
            return None;
        }
        let max = r.values().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(self.malicious.iter().any(|c| r.get(c) == Some(&max)))
    }

    pub fn num_candidates(&self) -> Option<usize> {
        self.candidates.as_ref().map(BTreeSet::len)
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub records: Vec<RoundRecord>,
    pub adversaries: BTreeSet<ClientId>,
    pub pool_size: usize,
    pub initial_accuracy: f64,
    pub final_weights: ParameterVector,
}

impl RunResult {
    pub fn final_accuracy(&self) -> f64 {
        self.records
            .last()
            .map_or(self.initial_accuracy, |r| r.accuracy)
    }

    /// Best accuracy and the round it was reached (earliest on ties).
    pub fn best(&self) -> (u32, f64) {
        self.records.iter().fold((0, f64::NEG_INFINITY), |best, r| {
            if r.accuracy > best.1 {
                (r.round, r.accuracy)
            } else {
                best
            }
        })
    }
}

/// Sees every global step as it is applied.
pub trait RoundObserver {
    fn on_round(
        &mut self,
        round: u32,
        before: &ParameterVector,
        outcome: &AggregationOutcome,
        after: &ParameterVector,
    );
}

impl RoundObserver for () {
    fn on_round(
        &mut self,
        _: u32,
        _: &ParameterVector,
        _: &AggregationOutcome,
        _: &ParameterVector,
    ) {
    }
}

/// Loads the data and runs the configured experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunResult> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    run_with_data(cfg, &data, &mut ())
}

/// Clients chosen for `round`, ascending.
pub fn select_clients(cfg: &ExperimentConfig, round: u32) -> Vec<ClientId> {
    let pool = cfg.clients.pool_size();
    let mut ids: Vec<ClientId> = match cfg.clients.selection {
        Selection::Static => (0..pool as u32).map(ClientId).collect(),
        Selection::Dynamic => {
            let mut rng = substream(cfg.seed, Purpose::Selection, u64::from(round), 0);
            index::sample(&mut rng, pool, cfg.clients.clients_per_round())
                .into_iter()
                .map(|i| ClientId(i as u32))
                .collect()
        }
    };
    ids.sort_unstable();
    ids
}

/// Adversaries for the whole experiment.
pub fn adversaries(cfg: &ExperimentConfig) -> Result<BTreeSet<ClientId>> {
    let pool: Vec<ClientId> = (0..cfg.clients.pool_size() as u32).map(ClientId).collect();
    let mut rng = substream(cfg.seed, Purpose::Adversaries, 0, 0);
    assign_adversaries(&pool, &cfg.attack, &mut rng)
        .map_err(|e| SimError::config(format!("attack: {e}")))
}

fn data_error(what: &str, e: robustfed_core::Error) -> SimError {
    SimError::data(what, e.to_string())
}

pub fn run_with_data(
    cfg: &ExperimentConfig,
    data: &Data,
    observer: &mut dyn RoundObserver,
) -> Result<RunResult> {
    let cfg = cfg.clone().normalized();
    cfg.validate()?;
    let spec = &cfg.model;
    if data.train.dim() != spec.input_dim || data.test.dim() != spec.input_dim {
        return Err(SimError::config(format!(
            "model.input_dim: {} does not match the data ({} train, {} test features)",
            spec.input_dim,
            data.train.dim(),
            data.test.dim()
        )));
    }
    let pool = cfg.clients.pool_size();
    let mut shards = partition_iid(
        &data.train,
        pool,
        &mut substream(cfg.seed, Purpose::Partition, 0, 0),
    )
    .map_err(|e| data_error("training set", e))?;
    let bad = adversaries(&cfg)?;
    for c in &bad {
        let shard = &mut shards[c.0 as usize];
        *shard = match cfg.attack.kind {
            AttackKind::FlipLabel => poison_flip(shard, &cfg.attack),
            AttackKind::NoisyData => poison_noise(
                shard,
                &cfg.attack,
                &mut substream(cfg.seed, Purpose::NoisyData, u64::from(c.0), 0),
            ),
            AttackKind::None | AttackKind::Byzantine => Ok(shard.clone()),
        }
        .map_err(|e| data_error("training set", e))?;
    }

    let threads = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| SimError::config(format!("workers: {e}")))?;

    let mut global = spec.init_weights(&mut substream(cfg.seed, Purpose::Init, 0, 0));
    let initial_accuracy = evaluate(&global, &data.test, spec)
        .map_err(|e| data_error("test set", e))?
        .accuracy;
    let mut aggregator = Aggregator::new(cfg.aggregator.name, cfg.aggregator_params());
    let mut records = Vec::with_capacity(cfg.rounds as usize);

    for round in 0..cfg.rounds {
        let started = Instant::now();
        let numeric = |source| SimError::Numeric { round, source };
        let selected = select_clients(&cfg, round);
        let total: usize = selected.iter().map(|c| shards[c.0 as usize].len()).sum();

        let updates: Vec<ClientUpdate> = threads
            .install(|| {
                selected
                    .par_iter()
                    .map(|&c| {
                        let shard = &shards[c.0 as usize];
                        let mut rng =
                            substream(cfg.seed, Purpose::Train, u64::from(c.0), u64::from(round));
                        let trained = local_train(&global, shard, spec, &mut rng)?;
                        let mut delta = trained.delta;
                        if cfg.attack.kind == AttackKind::Byzantine && bad.contains(&c) {
                            let mut rng = substream(
                                cfg.seed,
                                Purpose::Byzantine,
                                u64::from(c.0),
                                u64::from(round),
                            );
                            delta = byzantine_perturb(&delta, &cfg.attack, &mut rng)?;
                        }
                        let alpha = shard.len() as f64 / total as f64;
                        Ok(ClientUpdate::new(c, round, delta, alpha))
                    })
                    .collect::<robustfed_core::Result<Vec<_>>>()
            })
            .map_err(numeric)?;

        let outcome = aggregator.aggregate(&updates).map_err(numeric)?;
        let next = params::add(&global, &outcome.global_delta).map_err(numeric)?;
        observer.on_round(round, &global, &outcome, &next);
        global = next;
        let eval = evaluate(&global, &data.test, spec).map_err(numeric)?;
        if !eval.loss.is_finite() {
            return Err(numeric(robustfed_core::Error::NonFinite("test loss")));
        }

        let malicious: Vec<ClientId> = selected
            .iter()
            .copied()
            .filter(|c| bad.contains(c))
            .collect();
        let record = RoundRecord {
            round,
            selected,
            malicious,
            delta_norm: outcome.global_delta.norm(),
            reliabilities: outcome.reliabilities,
            candidates: outcome.candidates,
            accuracy: eval.accuracy,
            loss: eval.loss,
            diagnostics: outcome.diagnostics,
            wall_time: started.elapsed().as_secs_f64(),
        };
        log::debug!(
            "{} {} round {round}: acc {:.4} loss {:.4}",
            cfg.aggregator.name,
            cfg.attack.kind,
            record.accuracy,
            record.loss
        );
        records.push(record);
    }

    Ok(RunResult {
        records,
        adversaries: bad,
        pool_size: pool,
        initial_accuracy,
        final_weights: global,
    })
}
