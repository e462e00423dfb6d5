//! Mini-batch cross-entropy training with Adam and dev-split early stopping.
//!
//! Seen-class ids are remapped to contiguous indices `0..N` in the order
//! given. Each epoch shuffles the train records with the run's seeded RNG,
//! averages per-sample gradients over each batch (the last partial batch
//! included) and takes one Adam step per batch. Dev accuracy is the
//! closed-set argmax accuracy of the trained head; the parameters of the
//! best dev epoch are restored at the end.

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bundle::{EmbeddingBundle, DEV, TRAIN};
use crate::checkpoint::{ModelConfig, ModelKind};
use crate::encoder::{BaselineVariant, LATENT_DIM};
use crate::error::{Error, Result};
use crate::fusion::{DEFAULT_ALPHA, DEFAULT_TAU};
use crate::gnn::DEFAULT_HEADS;
use crate::knn::{KnnIndex, DEFAULT_EPS, DEFAULT_K};
use crate::model::{BaselineModel, Classifier, SignalModel};
use crate::nn::{AdamConfig, Tensor};

/// Lower clamp on the true-class probability inside the loss.
pub const CE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Bundle label ids treated as seen; `None` means every label.
    pub seen_class_ids: Option<Vec<i32>>,
    pub heads: usize,
    pub k: usize,
    pub eps: f64,
    pub alpha: f64,
    pub tau: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 32,
            max_epochs: 50,
            patience: 5,
            seed: 0,
            seen_class_ids: None,
            heads: DEFAULT_HEADS,
            k: DEFAULT_K,
            eps: DEFAULT_EPS,
            alpha: DEFAULT_ALPHA,
            tau: DEFAULT_TAU,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate {} must be ≥ 0", self.lr)));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::InvalidConfig(
                "batch size, max epochs and patience must be positive".into(),
            ));
        }
        if matches!(&self.seen_class_ids, Some(ids) if ids.is_empty()) {
            return Err(Error::InvalidConfig("seen class list is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// Index into `epochs` of the (first) maximal dev accuracy.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainReport {
    pub fn train_loss(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }

    pub fn dev_accuracy(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.dev_accuracy).collect()
    }
}

/// `−ln(max(p_y, 1e-12))`.
pub fn cross_entropy(p: &[f64], label: usize) -> Result<f64> {
    let py = p
        .get(label)
        .ok_or_else(|| Error::InvalidInput(format!("class {label} outside 0..{}", p.len())))?;
    Ok(-py.max(CE_FLOOR).ln())
}

/// Records of one split restricted to the seen classes, remapped to `0..N`.
#[derive(Debug, Clone)]
pub struct LabeledSet {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    /// Bundle record index of each entry.
    pub records: Vec<usize>,
}

/// Resolves the seen-class list against the bundle's label names.
pub fn resolve_seen(bundle: &EmbeddingBundle, seen: Option<&[i32]>) -> Result<Vec<i32>> {
    let all: Vec<i32> = (0..bundle.label_names.len() as i32).collect();
    let ids = seen.map_or(all, <[i32]>::to_vec);
    for (i, &id) in ids.iter().enumerate() {
        if bundle.label_name(id).is_none() {
            return Err(Error::InvalidInput(format!(
                "seen class {id} is not a label of this bundle ({} labels)",
                bundle.label_names.len()
            )));
        }
        if ids[..i].contains(&id) {
            return Err(Error::InvalidInput(format!("seen class {id} listed twice")));
        }
    }
    if ids.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 seen classes, got {}",
            ids.len()
        )));
    }
    Ok(ids)
}

pub fn labeled_split(bundle: &EmbeddingBundle, split: &str, seen: &[i32]) -> Result<LabeledSet> {
    let mut set = LabeledSet {
        inputs: Vec::new(),
        labels: Vec::new(),
        records: Vec::new(),
    };
    for &idx in bundle.split(split)? {
        if let Some(class) = seen.iter().position(|&s| s == bundle.label_ids[idx]) {
            set.inputs.push(bundle.row_f64(idx));
            set.labels.push(class);
            set.records.push(idx);
        }
    }
    Ok(set)
}

struct Prepared {
    seen: Vec<i32>,
    train: LabeledSet,
    dev: LabeledSet,
}

fn prepare(bundle: &EmbeddingBundle, config: &TrainConfig) -> Result<Prepared> {
    config.validate()?;
    let seen = resolve_seen(bundle, config.seen_class_ids.as_deref())?;
    let train = labeled_split(bundle, TRAIN, &seen)?;
    let dev = labeled_split(bundle, DEV, &seen)?;
    if train.inputs.is_empty() {
        return Err(Error::InvalidInput("train split has no seen-class records".into()));
    }
    if dev.inputs.is_empty() {
        return Err(Error::InvalidInput("dev split has no seen-class records".into()));
    }
    for (class, id) in seen.iter().enumerate() {
        if !train.labels.contains(&class) {
            return Err(Error::InvalidInput(format!(
                "seen class {id} has no train records"
            )));
        }
    }
    Ok(Prepared { seen, train, dev })
}

fn model_config(bundle: &EmbeddingBundle, kind: ModelKind, seen: &[i32], config: &TrainConfig) -> ModelConfig {
    ModelConfig {
        kind,
        input_dim: bundle.dim,
        classes: seen.len(),
        latent_dim: LATENT_DIM,
        heads: config.heads,
        alpha: config.alpha,
        tau: config.tau,
        k: config.k,
        eps: config.eps,
        seen_class_ids: seen.to_vec(),
        class_names: seen
            .iter()
            .map(|&id| bundle.label_name(id).unwrap_or_default().to_string())
            .collect(),
    }
}

pub fn accuracy<M: Classifier>(model: &M, set: &LabeledSet) -> Result<f64> {
    let mut correct = 0usize;
    for (x, &y) in set.inputs.iter().zip(&set.labels) {
        if model.predict_class(x)? == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / set.inputs.len() as f64)
}

/// Shared epoch loop; leaves the best-dev parameters in `model`.
pub fn fit<M: Classifier>(
    model: &mut M,
    train: &LabeledSet,
    dev: &LabeledSet,
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let adam = AdamConfig::with_lr(config.lr);
    let mut grads = model.params().grad_buffer();
    let mut order: Vec<usize> = (0..train.inputs.len()).collect();

    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64, Vec<Tensor>)> = None;
    let mut stale = 0usize;
    let mut stopped_early = false;

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.zero();
            for &i in batch {
                loss_sum += model.loss_and_grad(&train.inputs[i], train.labels[i], &mut grads)?;
            }
            let params = model.params_mut();
            params.accumulate(&grads, 1.0 / batch.len() as f64);
            params.adam_step(&adam);
        }
        let train_loss = loss_sum / train.inputs.len() as f64;
        let dev_accuracy = accuracy(model, dev)?;
        debug!("epoch {epoch}: loss {train_loss:.6}, dev accuracy {dev_accuracy:.4}");
        epochs.push(EpochStats {
            epoch,
            train_loss,
            dev_accuracy,
        });

        if best.as_ref().is_none_or(|(_, acc, _)| dev_accuracy > *acc) {
            best = Some((epoch, dev_accuracy, model.params().values_snapshot()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                stopped_early = true;
                break;
            }
        }
    }

    let (best_epoch, best_acc, snapshot) = best.expect("at least one epoch");
    model.params_mut().restore_values(&snapshot);
    info!(
        "trained {} epochs, best epoch {best_epoch} (dev accuracy {best_acc:.4}){}",
        epochs.len(),
        if stopped_early { ", stopped early" } else { "" }
    );
    Ok(TrainReport {
        epochs,
        best_epoch,
        stopped_early,
    })
}

/// Trains encoder and head jointly, then fits the KNN index on the frozen
/// encoder's train-split latents.
pub fn train(
    bundle: &EmbeddingBundle,
    config: &TrainConfig,
) -> Result<(SignalModel, KnnIndex, TrainReport)> {
    let prep = prepare(bundle, config)?;
    let mc = model_config(bundle, ModelKind::Signal, &prep.seen, config);
    let mut model = SignalModel::init(mc, config.seed)?;
    let report = fit(&mut model, &prep.train, &prep.dev, config)?;

    let mut latents = Vec::with_capacity(prep.train.inputs.len() * LATENT_DIM);
    for x in &prep.train.inputs {
        latents.extend(model.encode(x)?);
    }
    let latents = Tensor::matrix(prep.train.inputs.len(), LATENT_DIM, latents)?;
    let knn = KnnIndex::fit(
        latents,
        prep.train.labels.clone(),
        model.config.classes,
        config.k,
        config.eps,
    )?;
    Ok((model, knn, report))
}

pub fn train_baseline(
    bundle: &EmbeddingBundle,
    config: &TrainConfig,
    variant: BaselineVariant,
) -> Result<(BaselineModel, TrainReport)> {
    let prep = prepare(bundle, config)?;
    let mc = model_config(bundle, variant.into(), &prep.seen, config);
    let mut model = BaselineModel::init(mc, config.seed)?;
    let report = fit(&mut model, &prep.train, &prep.dev, config)?;
    Ok((model, report))
}
