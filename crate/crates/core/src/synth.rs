//! Seeded Gaussian-cluster bundles standing in for per-generator embeddings.
//!
//! Randomness comes from `ChaCha8Rng::seed_from_u64(seed)` (rand_chacha) with
//! `rand_distr::StandardNormal` draws, consumed in a fixed order: every class
//! mean first (one `dim`-vector per class, normalized to `mean_radius`), then
//! the samples class by class. Records are stored class-major; within each
//! class the first 60% go to `train`, the next 20% to `dev`, the rest to `test`.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bundle::{EmbeddingBundle, DEV, TEST, TRAIN};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub cluster_std: f64,
    pub mean_radius: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.per_class == 0 || self.dim == 0 {
            return Err(Error::InvalidConfig(
                "classes, per_class and dim must be positive".into(),
            ));
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.cluster_std) || !positive(self.mean_radius) {
            return Err(Error::InvalidConfig(
                "cluster_std and mean_radius must be positive".into(),
            ));
        }
        Ok(())
    }
}

pub fn class_name(c: usize) -> String {
    format!("gen{c}")
}

/// Per-class (train, dev, test) sizes.
pub fn split_sizes(per_class: usize) -> (usize, usize, usize) {
    let train = per_class * 3 / 5;
    let dev = per_class / 5;
    (train, dev, per_class - train - dev)
}

pub fn generate_synthetic(config: &SynthConfig) -> Result<EmbeddingBundle> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dim = config.dim;

    let means: Vec<Vec<f64>> = (0..config.classes)
        .map(|_| loop {
            let dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                break dir.iter().map(|v| v * config.mean_radius / norm).collect();
            }
        })
        .collect();

    let count = config.classes * config.per_class;
    let mut vectors = Vec::with_capacity(count * dim);
    let mut label_ids = Vec::with_capacity(count);
    let mut splits: BTreeMap<String, Vec<usize>> = [TRAIN, DEV, TEST]
        .into_iter()
        .map(|s| (s.to_string(), Vec::new()))
        .collect();
    let (n_train, n_dev, _) = split_sizes(config.per_class);

    for (c, mean) in means.iter().enumerate() {
        for s in 0..config.per_class {
            let idx = label_ids.len();
            for &m in mean {
                let noise: f64 = StandardNormal.sample(&mut rng);
                vectors.push((m + config.cluster_std * noise) as f32);
            }
            label_ids.push(c as i32);
            let split = if s < n_train {
                TRAIN
            } else if s < n_train + n_dev {
                DEV
            } else {
                TEST
            };
            splits.get_mut(split).expect("known split").push(idx);
        }
    }

    Ok(EmbeddingBundle {
        dim,
        vectors,
        label_ids,
        label_names: (0..config.classes).map(class_name).collect(),
        splits,
    })
}
