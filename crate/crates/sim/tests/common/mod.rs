#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robustfed_core::{ModelKind, ModelSpec};
use robustfed_sim::config::DataConfig;
use robustfed_sim::ExperimentConfig;

pub const SIDE: usize = 4;
pub const DIM: usize = SIDE * SIDE;

fn idx(dims: &[u32], payload: &[u8]) -> Vec<u8> {
    let mut b = vec![0, 0, 0x08, dims.len() as u8];
    for d in dims {
        b.extend(d.to_be_bytes());
    }
    b.extend_from_slice(payload);
    b
}

/// Two classes of 4x4 images: bright left half (0) or bright right half (1).
fn images(n: usize, rng: &mut ChaCha8Rng) -> (Vec<u8>, Vec<u8>) {
    let mut pixels = Vec::with_capacity(n * DIM);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = (i % 2) as u8;
        for p in 0..DIM {
            let right = p % SIDE >= SIDE / 2;
            let bright = right == (label == 1);
            pixels.push(if bright {
                rng.random_range(150..=255)
            } else {
                rng.random_range(0..60)
            });
        }
        labels.push(label);
    }
    (pixels, labels)
}

/// Writes the four IDX files of a toy dataset into `dir`.
pub fn write_toy(dir: &Path, train: usize, test: usize) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (prefix, n) in [("train", train), ("t10k", test)] {
        let (px, lab) = images(n, &mut rng);
        fs::write(
            dir.join(format!("{prefix}-images-idx3-ubyte")),
            idx(&[n as u32, SIDE as u32, SIDE as u32], &px),
        )
        .unwrap();
        fs::write(
            dir.join(format!("{prefix}-labels-idx1-ubyte")),
            idx(&[n as u32], &lab),
        )
        .unwrap();
    }
    dir.to_path_buf()
}

/// Softmax regression on the toy data, 10 static clients, 5 rounds.
pub fn toy_config(dir: &Path) -> ExperimentConfig {
    ExperimentConfig {
        rounds: 5,
        data: DataConfig {
            name: "toy".into(),
            ..DataConfig::idx_dir(dir)
        },
        model: ModelSpec {
            kind: ModelKind::SoftmaxRegression,
            input_dim: DIM,
            num_classes: 2,
            ..ModelSpec::default()
        },
        ..ExperimentConfig::default()
    }
}

pub fn toy_toml(dir: &Path) -> String {
    toy_config(dir).to_toml()
}
