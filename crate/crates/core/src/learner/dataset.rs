use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Labelled examples with features in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<u32>,
    dim: usize,
    num_classes: u32,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<u32>, dim: usize, num_classes: u32) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "must be positive"));
        }
        if num_classes == 0 {
            return Err(Error::invalid("num_classes", "must be positive"));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * dim,
                found: features.len(),
            });
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::invalid(
                "labels",
                alloc::format!("label {bad} outside 0..{num_classes}"),
            ));
        }
        if features.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::invalid(
                "features",
                "values must be finite and within [0, 1]",
            ));
        }
        Ok(Dataset {
            features,
            labels,
            dim,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> u32 {
        self.num_classes
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Examples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            features,
            labels,
            dim: self.dim,
            num_classes: self.num_classes,
        }
    }

    /// The first `n` examples (or all of them).
    pub fn truncated(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            features: self.features[..n * self.dim].to_vec(),
            labels: self.labels[..n].to_vec(),
            dim: self.dim,
            num_classes: self.num_classes,
        }
    }

    /// Replaces every label. Counts and classes are validated.
    pub fn with_labels(self, labels: Vec<u32>) -> Result<Dataset> {
        Dataset::new(self.features, labels, self.dim, self.num_classes)
    }

    /// Replaces every feature. Shape and range are validated.
    pub fn with_features(self, features: Vec<f64>) -> Result<Dataset> {
        Dataset::new(features, self.labels, self.dim, self.num_classes)
    }
}

/// Shuffles under `rng` and deals the examples into `num_clients` shards of
/// near-equal size; the first `len % num_clients` shards get one extra example.
pub fn partition_iid<R: Rng + ?Sized>(
    dataset: &Dataset,
    num_clients: usize,
    rng: &mut R,
) -> Result<Vec<Dataset>> {
    if num_clients == 0 {
        return Err(Error::invalid("num_clients", "must be at least 1"));
    }
    if num_clients > dataset.len() {
        return Err(Error::TooFew {
            what: "examples to give every client one",
            needed: num_clients,
            got: dataset.len(),
        });
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(rng);
    let base = dataset.len() / num_clients;
    let extra = dataset.len() % num_clients;
    let mut shards = Vec::with_capacity(num_clients);
    let mut start = 0;
    for c in 0..num_clients {
        let size = base + usize::from(c < extra);
        shards.push(dataset.subset(&order[start..start + size]));
        start += size;
    }
    Ok(shards)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Purpose};
    use alloc::vec;

    fn toy(n: usize) -> Dataset {
        let features = (0..n * 2).map(|i| (i % 7) as f64 / 7.0).collect();
        let labels = (0..n as u32).map(|i| i % 3).collect();
        Dataset::new(features, labels, 2, 3).unwrap()
    }

    #[test]
    fn validation() {
        assert!(Dataset::new(vec![0.5, 1.5], vec![0], 2, 2).is_err());
        assert!(Dataset::new(vec![0.5, 0.5], vec![2], 2, 2).is_err());
        assert!(Dataset::new(vec![0.5], vec![0], 2, 2)
            .unwrap_err()
            .is_structural());
        assert!(Dataset::new(vec![f64::NAN, 0.0], vec![0], 2, 2).is_err());
    }

    #[test]
    fn exact_division() {
        let shards =
            partition_iid(&toy(100), 10, &mut substream(1, Purpose::Partition, 0, 0)).unwrap();
        assert!(shards.iter().all(|s| s.len() == 10));
    }

    #[test]
    fn remainder_goes_first() {
        let shards =
            partition_iid(&toy(101), 10, &mut substream(1, Purpose::Partition, 0, 0)).unwrap();
        let sizes: Vec<usize> = shards.iter().map(Dataset::len).collect();
        assert_eq!(sizes, [11, 10, 10, 10, 10, 10, 10, 10, 10, 10]);
    }

    #[test]
    fn shards_cover_the_dataset_once() {
        // tag each example by its feature pattern and label
        let n = 57;
        let features: Vec<f64> = (0..n).flat_map(|i| [i as f64 / n as f64, 0.0]).collect();
        let data = Dataset::new(features, vec![0; n], 2, 1).unwrap();
        let shards = partition_iid(&data, 4, &mut substream(9, Purpose::Partition, 0, 0)).unwrap();
        let mut seen: Vec<f64> = shards
            .iter()
            .flat_map(|s| (0..s.len()).map(|i| s.row(i)[0]))
            .collect();
        seen.sort_by(f64::total_cmp);
        let expected: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        assert_eq!(seen, expected);
    }

    #[test]
    fn same_seed_same_shards() {
        let a = partition_iid(&toy(40), 3, &mut substream(5, Purpose::Partition, 0, 0)).unwrap();
        let b = partition_iid(&toy(40), 3, &mut substream(5, Purpose::Partition, 0, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_many_clients() {
        assert!(partition_iid(&toy(3), 4, &mut substream(0, Purpose::Partition, 0, 0)).is_err());
        assert!(partition_iid(&toy(3), 0, &mut substream(0, Purpose::Partition, 0, 0)).is_err());
    }
}
