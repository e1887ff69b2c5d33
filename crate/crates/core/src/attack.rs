//! Adversarial clients: label flipping and feature noise poison a client's
//! shard once; Byzantine noise is added to every outgoing update.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::learner::Dataset;
use crate::params::ParameterVector;
use crate::update::ClientId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum AttackKind {
    #[default]
    None,
    FlipLabel,
    NoisyData,
    Byzantine,
}

impl AttackKind {
    pub const ALL: [AttackKind; 4] = [
        AttackKind::None,
        AttackKind::FlipLabel,
        AttackKind::NoisyData,
        AttackKind::Byzantine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::None => "none",
            AttackKind::FlipLabel => "flip_label",
            AttackKind::NoisyData => "noisy_data",
            AttackKind::Byzantine => "byzantine",
        }
    }

    /// Whether the attack rewrites the malicious clients' training data.
    pub fn poisons_data(self) -> bool {
        matches!(self, AttackKind::FlipLabel | AttackKind::NoisyData)
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AttackKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid("attack", alloc::format!("unknown attack `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub flip_source_class: u32,
    pub flip_target_class: u32,
    pub noise_low: f64,
    pub noise_high: f64,
    pub byz_sigma: f64,
    pub malicious_fraction: f64,
}

impl Default for AttackSpec {
    fn default() -> Self {
        AttackSpec {
            kind: AttackKind::None,
            flip_source_class: 1,
            flip_target_class: 7,
            noise_low: -1.4,
            noise_high: 1.4,
            byz_sigma: 20.0,
            malicious_fraction: 0.3,
        }
    }
}

impl AttackSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.malicious_fraction) {
            return Err(Error::invalid("malicious_fraction", "must be in [0, 0.5)"));
        }
        if !(self.noise_low.is_finite()
            && self.noise_high.is_finite()
            && self.noise_low < self.noise_high)
        {
            return Err(Error::invalid(
                "noise_low",
                "need finite noise_low < noise_high",
            ));
        }
        if !(self.byz_sigma >= 0.0 && self.byz_sigma.is_finite()) {
            return Err(Error::invalid(
                "byz_sigma",
                "must be finite and non-negative",
            ));
        }
        if self.flip_source_class == self.flip_target_class {
            return Err(Error::invalid(
                "flip_target_class",
                "must differ from flip_source_class",
            ));
        }
        Ok(())
    }

    /// Class indices must also fit the dataset.
    pub fn validate_for(&self, num_classes: u32) -> Result<()> {
        self.validate()?;
        for (name, c) in [
            ("flip_source_class", self.flip_source_class),
            ("flip_target_class", self.flip_target_class),
        ] {
            if c >= num_classes {
                return Err(Error::invalid(
                    name,
                    alloc::format!("class {c} outside 0..{num_classes}"),
                ));
            }
        }
        Ok(())
    }
}

/// Relabels every `flip_source_class` example as `flip_target_class`.
pub fn poison_flip(dataset: &Dataset, spec: &AttackSpec) -> Result<Dataset> {
    spec.validate_for(dataset.num_classes())?;
    let labels: Vec<u32> = dataset
        .labels()
        .iter()
        .map(|&l| {
            if l == spec.flip_source_class {
                spec.flip_target_class
            } else {
                l
            }
        })
        .collect();
    dataset.clone().with_labels(labels)
}

/// `x <- clamp(x + u, 0, 1)` with a fresh `u ~ U(noise_low, noise_high)` per
/// feature.
pub fn poison_noise<R: Rng + ?Sized>(
    dataset: &Dataset,
    spec: &AttackSpec,
    rng: &mut R,
) -> Result<Dataset> {
    spec.validate()?;
    let noise = Uniform::new(spec.noise_low, spec.noise_high)
        .map_err(|_| Error::invalid("noise_low", "need noise_low < noise_high"))?;
    let features: Vec<f64> = dataset
        .features()
        .iter()
        .map(|&x| (x + noise.sample(rng)).clamp(0.0, 1.0))
        .collect();
    dataset.clone().with_features(features)
}

/// Adds independent `N(0, byz_sigma^2)` noise to every coordinate.
pub fn byzantine_perturb<R: Rng + ?Sized>(
    delta: &ParameterVector,
    spec: &AttackSpec,
    rng: &mut R,
) -> Result<ParameterVector> {
    if spec.byz_sigma == 0.0 {
        return Ok(delta.clone());
    }
    let normal = Normal::new(0.0, spec.byz_sigma)
        .map_err(|_| Error::invalid("byz_sigma", "must be non-negative"))?;
    let out = delta
        .as_slice()
        .iter()
        .map(|&x| x + normal.sample(rng))
        .collect();
    ParameterVector::new(out).map_err(|_| Error::NonFinite("byzantine_perturb"))
}

/// Uniformly samples `floor(malicious_fraction * n)` of `clients` as
/// adversaries for the whole experiment.
pub fn assign_adversaries<R: Rng + ?Sized>(
    clients: &[ClientId],
    spec: &AttackSpec,
    rng: &mut R,
) -> Result<BTreeSet<ClientId>> {
    spec.validate()?;
    if spec.kind == AttackKind::None {
        return Ok(BTreeSet::new());
    }
    let mut sorted = clients.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    // the epsilon keeps 0.3 * 10 from landing on 2.999...
    let count = libm::floor(spec.malicious_fraction * sorted.len() as f64 + 1e-9) as usize;
    Ok(rand::seq::index::sample(rng, sorted.len(), count)
        .into_iter()
        .map(|i| sorted[i])
        .collect())
}
