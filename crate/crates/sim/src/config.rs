//! Experiment configuration: a TOML file where every field has a default, so
//! an empty file describes the standard static-mode MNIST experiment.

use std::fs;
use std::path::{Path, PathBuf};

use robustfed_core::aggregate::{TemporalMode, ThresholdRule, Weighting};
use robustfed_core::{
    AggregatorKind, AggregatorParams, AttackKind, AttackSpec, ModelSpec, TruthInferenceConfig,
};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub rounds: u32,
    /// Worker threads for local training; 0 uses every core. Never affects
    /// results.
    pub workers: usize,
    pub data: DataConfig,
    pub model: ModelSpec,
    pub clients: ClientsConfig,
    pub attack: AttackSpec,
    pub aggregator: AggregatorConfig,
    pub truth_inference: TruthInferenceConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suite: Option<SuiteConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            rounds: 50,
            workers: 0,
            data: DataConfig::default(),
            model: ModelSpec::default(),
            clients: ClientsConfig::default(),
            attack: AttackSpec::default(),
            aggregator: AggregatorConfig::default(),
            truth_inference: TruthInferenceConfig::default(),
            suite: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    #[default]
    Idx,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Label for the `dataset` column of `table.csv`.
    pub name: String,
    pub format: DataFormat,
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_csv: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_csv: Option<PathBuf>,
    /// CSV features are divided by this.
    pub csv_scale: f64,
    /// Keep only the first `max_train` training examples.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_train: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_test: Option<usize>,
}

impl Default for DataConfig {
    fn default() -> Self {
        let dir = Path::new("data/mnist-subset");
        DataConfig {
            name: "mnist-subset".into(),
            format: DataFormat::Idx,
            train_images: dir.join("train-images-idx3-ubyte"),
            train_labels: dir.join("train-labels-idx1-ubyte"),
            test_images: dir.join("t10k-images-idx3-ubyte"),
            test_labels: dir.join("t10k-labels-idx1-ubyte"),
            train_csv: None,
            test_csv: None,
            csv_scale: 1.0,
            max_train: None,
            max_test: None,
        }
    }
}

impl DataConfig {
    /// Points the four IDX paths at the standard file names inside `dir`.
    pub fn idx_dir(dir: &Path) -> DataConfig {
        DataConfig {
            train_images: dir.join("train-images-idx3-ubyte"),
            train_labels: dir.join("train-labels-idx1-ubyte"),
            test_images: dir.join("t10k-images-idx3-ubyte"),
            test_labels: dir.join("t10k-labels-idx1-ubyte"),
            ..DataConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// The same `num_clients` clients take part in every round.
    #[default]
    Static,
    /// Each round samples `clients_per_round` clients from `pool_size`.
    Dynamic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientsConfig {
    pub selection: Selection,
    pub num_clients: usize,
    /// Clients holding data. Defaults to `num_clients` (static) or 100
    /// (dynamic).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pool_size: Option<usize>,
    /// Defaults to `num_clients`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clients_per_round: Option<usize>,
}

impl Default for ClientsConfig {
    fn default() -> Self {
        ClientsConfig {
            selection: Selection::Static,
            num_clients: 10,
            pool_size: None,
            clients_per_round: None,
        }
    }
}

impl ClientsConfig {
    pub fn pool_size(&self) -> usize {
        self.pool_size.unwrap_or(match self.selection {
            Selection::Static => self.num_clients,
            Selection::Dynamic => 100,
        })
    }

    pub fn clients_per_round(&self) -> usize {
        self.clients_per_round.unwrap_or(self.num_clients)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregatorConfig {
    pub name: AggregatorKind,
    /// Per-side trim count. Defaults to the expected number of attackers
    /// per round.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trim_k: Option<usize>,
    /// Assumed attacker bound for (Multi-)Krum; same default as `trim_k`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub krum_f: Option<usize>,
    /// Updates averaged by Multi-Krum. Defaults to `n - f - 2`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub multi_krum_m: Option<usize>,
    pub weighting: Weighting,
    /// Defaults to the client selection mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temporal_mode: Option<TemporalMode>,
    pub threshold: ThresholdRule,
}

impl Default for AggregatorConfig {
    fn default() -> Self {
        AggregatorConfig {
            name: AggregatorKind::RobustFedPlus,
            trim_k: None,
            krum_f: None,
            multi_krum_m: None,
            weighting: Weighting::Normalized,
            temporal_mode: None,
            threshold: ThresholdRule::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub aggregators: Vec<AggregatorKind>,
    pub attacks: Vec<AttackKind>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            aggregators: AggregatorKind::ALL.to_vec(),
            attacks: AttackKind::ALL.to_vec(),
        }
    }
}

/// Command-line replacements for individual keys.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub aggregator: Option<AggregatorKind>,
    pub attack: Option<AttackKind>,
    pub rounds: Option<u32>,
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| SimError::config(e.to_string().trim_end().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| SimError::config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(a) = o.aggregator {
            self.aggregator.name = a;
        }
        if let Some(a) = o.attack {
            self.attack.kind = a;
        }
        if let Some(r) = o.rounds {
            self.rounds = r;
        }
        if let Some(w) = o.workers {
            self.workers = w;
        }
    }

    /// Expected attackers among one round's participants:
    /// `round(malicious_fraction * clients_per_round)`. Independent of the
    /// attack kind, so clean and attacked runs use the same robust settings.
    pub fn expected_attackers(&self) -> usize {
        (self.attack.malicious_fraction * self.clients.clients_per_round() as f64).round() as usize
    }

    /// Makes every derived default explicit. Idempotent.
    pub fn normalize(&mut self) {
        let pool = self.clients.pool_size();
        let per_round = self.clients.clients_per_round();
        self.clients.pool_size = Some(pool);
        self.clients.clients_per_round = Some(per_round);
        let f = self.expected_attackers();
        let agg = &mut self.aggregator;
        agg.trim_k.get_or_insert(f);
        let f = *agg.krum_f.get_or_insert(f);
        agg.multi_krum_m
            .get_or_insert(per_round.saturating_sub(f + 2).max(1));
        agg.temporal_mode
            .get_or_insert(match self.clients.selection {
                Selection::Static => TemporalMode::Static,
                Selection::Dynamic => TemporalMode::Dynamic,
            });
    }

    pub fn normalized(mut self) -> Self {
        self.normalize();
        self
    }

    /// This config with the aggregator and attack kind replaced, as used for
    /// one suite cell.
    pub fn cell(&self, aggregator: AggregatorKind, attack: AttackKind) -> Self {
        let mut c = self.clone();
        c.aggregator.name = aggregator;
        c.attack.kind = attack;
        c.suite = None;
        c
    }

    pub fn aggregator_params(&self) -> AggregatorParams {
        let c = self.clone().normalized();
        let a = &c.aggregator;
        AggregatorParams {
            trim_k: a.trim_k.unwrap_or(0),
            krum_f: a.krum_f.unwrap_or(0),
            multi_krum_m: a.multi_krum_m,
            truth: c.truth_inference,
            weighting: a.weighting,
            temporal_mode: a.temporal_mode.unwrap_or_default(),
            threshold_rule: a.threshold,
        }
    }

    /// Every violated invariant, each prefixed with its field path.
    pub fn violations(&self) -> Vec<String> {
        let c = self.clone().normalized();
        let mut out = Vec::new();
        let mut bad = |path: &str, msg: String| out.push(format!("{path}: {msg}"));

        if c.rounds < 1 {
            bad("rounds", "must be at least 1".into());
        }
        if let Err(e) = c.model.validate() {
            bad(&core_path("model", &e), core_reason(&e));
        }
        // flip classes only matter when some run flips labels
        let flips = c.attack.kind == AttackKind::FlipLabel
            || c.suite
                .as_ref()
                .is_some_and(|s| s.attacks.contains(&AttackKind::FlipLabel));
        let classes = u32::try_from(c.model.num_classes).unwrap_or(u32::MAX);
        let attack = if flips {
            c.attack.validate_for(classes)
        } else {
            c.attack.validate()
        };
        if let Err(e) = attack {
            bad(&core_path("attack", &e), core_reason(&e));
        }
        if let Err(e) = c.truth_inference.validate() {
            bad(&core_path("truth_inference", &e), core_reason(&e));
        }
        if let ThresholdRule::MeanStd { k } = c.aggregator.threshold {
            if !(k >= 0.0 && k.is_finite()) {
                bad(
                    "aggregator.threshold.k",
                    "must be finite and non-negative".into(),
                );
            }
        }

        let k = c.clients.num_clients;
        let pool = c.clients.pool_size();
        let per_round = c.clients.clients_per_round();
        if k < 1 {
            bad("clients.num_clients", "must be at least 1".into());
        }
        match c.clients.selection {
            Selection::Static => {
                if pool != k {
                    bad(
                        "clients.pool_size",
                        format!("static selection needs pool_size == num_clients ({pool} != {k})"),
                    );
                }
                if per_round != k {
                    bad(
                        "clients.clients_per_round",
                        format!("static selection needs clients_per_round == num_clients ({per_round} != {k})"),
                    );
                }
            }
            Selection::Dynamic => {
                if per_round < 1 || per_round > pool {
                    bad(
                        "clients.clients_per_round",
                        format!("must be in 1..={pool} (pool_size)"),
                    );
                }
            }
        }

        let kinds = match &c.suite {
            Some(s) => {
                if s.aggregators.is_empty() {
                    bad("suite.aggregators", "must not be empty".into());
                }
                if s.attacks.is_empty() {
                    bad("suite.attacks", "must not be empty".into());
                }
                s.aggregators.clone()
            }
            None => vec![c.aggregator.name],
        };
        for kind in kinds {
            if let Some(msg) = feasibility(kind, &c.aggregator, per_round) {
                bad("aggregator", msg);
            }
        }

        match c.data.format {
            DataFormat::Idx => {}
            DataFormat::Csv => {
                if c.data.train_csv.is_none() {
                    bad("data.train_csv", "required when format = \"csv\"".into());
                }
                if c.data.test_csv.is_none() {
                    bad("data.test_csv", "required when format = \"csv\"".into());
                }
            }
        }
        if !(c.data.csv_scale > 0.0 && c.data.csv_scale.is_finite()) {
            bad("data.csv_scale", "must be positive and finite".into());
        }
        if let Some(n) = c.data.max_train {
            if n < pool {
                bad(
                    "data.max_train",
                    format!("{n} examples cannot cover {pool} clients"),
                );
            }
        }
        if c.data.max_test == Some(0) {
            bad("data.max_test", "must be positive".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(SimError::Config(v))
        }
    }
}

/// Whether `kind` can aggregate `n` updates per round under `agg`.
fn feasibility(kind: AggregatorKind, agg: &AggregatorConfig, n: usize) -> Option<String> {
    let f = agg.krum_f.unwrap_or(0);
    match kind {
        AggregatorKind::TrimmedMean => {
            let k = agg.trim_k.unwrap_or(0);
            (2 * k >= n).then(|| {
                format!(
                    "trimmed_mean needs 2 * trim_k < clients_per_round ({} >= {n})",
                    2 * k
                )
            })
        }
        AggregatorKind::Krum | AggregatorKind::MultiKrum if n < f + 3 => Some(format!(
            "{kind} needs clients_per_round >= krum_f + 3 ({n} < {})",
            f + 3
        )),
        AggregatorKind::MultiKrum => {
            let m = agg.multi_krum_m.unwrap_or(1);
            let max = n - f - 2;
            (m < 1 || m > max).then(|| format!("multi_krum_m must be in 1..={max}, got {m}"))
        }
        AggregatorKind::RobustFed if n < 2 => {
            Some("robustfed needs at least 2 clients per round".into())
        }
        AggregatorKind::RobustFedPlus | AggregatorKind::RobustFedT if n < 3 => {
            Some(format!("{kind} needs at least 3 clients per round"))
        }
        _ => None,
    }
}

fn core_path(prefix: &str, e: &robustfed_core::Error) -> String {
    match e {
        robustfed_core::Error::InvalidParameter { name, .. } => format!("{prefix}.{name}"),
        _ => prefix.to_string(),
    }
}

fn core_reason(e: &robustfed_core::Error) -> String {
    match e {
        robustfed_core::Error::InvalidParameter { reason, .. } => reason.clone(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default_experiment() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert!(c.validate().is_ok());
        let n = c.normalized();
        assert_eq!(n.clients.pool_size, Some(10));
        assert_eq!(n.aggregator.krum_f, Some(3));
        assert_eq!(n.aggregator.trim_k, Some(3));
        assert_eq!(n.aggregator.multi_krum_m, Some(5));
        assert_eq!(n.model.learning_rate, 0.1);
        assert_eq!(n.attack.byz_sigma, 20.0);
    }

    #[test]
    fn normalization_round_trips_through_toml_and_json() {
        let text =
            "seed = 7\n[clients]\nselection = \"dynamic\"\n[aggregator]\nname = \"robustfed_t\"\n";
        let n = ExperimentConfig::from_toml(text).unwrap().normalized();
        assert_eq!(n.clients.pool_size, Some(100));
        assert_eq!(n.aggregator.temporal_mode, Some(TemporalMode::Dynamic));
        let again = ExperimentConfig::from_toml(&n.to_toml())
            .unwrap()
            .normalized();
        assert_eq!(again, n);
        let json = serde_json::to_string(&n).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back.normalized(), n);
    }

    #[test]
    fn violations_name_their_fields() {
        let c = ExperimentConfig::from_toml("[attack]\nmalicious_fraction = 0.6\n").unwrap();
        let v = c.violations();
        assert_eq!(v.len(), 1);
        assert!(
            v[0].starts_with("attack.malicious_fraction:") && v[0].contains("0.5"),
            "{v:?}"
        );

        let c = ExperimentConfig::from_toml("[clients]\npool_size = 12\n").unwrap();
        assert!(c
            .violations()
            .iter()
            .any(|v| v.starts_with("clients.pool_size")));

        let c =
            ExperimentConfig::from_toml("[model]\nlearning_rate = -1.0\nmomentum = 1.0\n").unwrap();
        assert!(c.violations()[0].starts_with("model.learning_rate"));
    }

    #[test]
    fn infeasible_aggregators() {
        let text = "[aggregator]\nname = \"trimmed_mean\"\ntrim_k = 5\n";
        assert!(ExperimentConfig::from_toml(text)
            .unwrap()
            .validate()
            .is_err());
        let text = "[aggregator]\nname = \"krum\"\nkrum_f = 8\n";
        assert!(ExperimentConfig::from_toml(text)
            .unwrap()
            .validate()
            .is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("sead = 3\n").is_err());
        assert!(ExperimentConfig::from_toml("[aggregator]\nname = \"bulyan\"\n").is_err());
    }

    #[test]
    fn overrides() {
        let mut c = ExperimentConfig::default();
        c.apply(&Overrides {
            seed: Some(9),
            aggregator: Some(AggregatorKind::Median),
            attack: Some(AttackKind::Byzantine),
            rounds: Some(3),
            workers: None,
        });
        assert_eq!((c.seed, c.rounds), (9, 3));
        assert_eq!(c.aggregator.name, AggregatorKind::Median);
        assert_eq!(c.attack.kind, AttackKind::Byzantine);
    }
}
