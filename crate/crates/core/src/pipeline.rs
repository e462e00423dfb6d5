//! Glue between bundles, checkpoints and metrics: load whichever model a
//! checkpoint holds, run it over a split and pair the outputs with truths.

use std::path::Path;

use crate::bundle::{EmbeddingBundle, UNLABELED};
use crate::checkpoint::{load_checkpoint, save_checkpoint, ModelConfig, ModelKind, CHECKPOINT_FILE};
use crate::error::{Error, Result};
use crate::fusion::{self, route, FusionConfig, Prediction};
use crate::gnn::attention_entropy;
use crate::knn::KnnIndex;
use crate::metrics::{evaluate_closed, evaluate_open, MetricsReport, Protocol, Truth};
use crate::model::{argmax, BaselineModel, Classifier, SignalModel};

#[derive(Debug, Clone)]
pub enum LoadedModel {
    Signal { model: SignalModel, knn: KnnIndex },
    Baseline(BaselineModel),
}

/// `path` may name the checkpoint file or the directory holding `model.sgm`.
pub fn checkpoint_path(path: &Path) -> std::path::PathBuf {
    if path.is_dir() {
        path.join(CHECKPOINT_FILE)
    } else {
        path.to_path_buf()
    }
}

impl LoadedModel {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let cp = load_checkpoint(checkpoint_path(path.as_ref()))?;
        match cp.config.kind {
            ModelKind::Signal => {
                let (model, knn) = SignalModel::from_checkpoint(cp)?;
                Ok(Self::Signal { model, knn })
            }
            ModelKind::Fcn | ModelKind::Cnn => Ok(Self::Baseline(BaselineModel::from_checkpoint(cp)?)),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let cp = match self {
            Self::Signal { model, knn } => model.to_checkpoint(knn),
            Self::Baseline(m) => m.to_checkpoint(),
        };
        save_checkpoint(&cp, path)
    }

    pub fn config(&self) -> &ModelConfig {
        match self {
            Self::Signal { model, .. } => &model.config,
            Self::Baseline(m) => &m.config,
        }
    }

    /// Fusion settings stored with the checkpoint.
    pub fn default_fusion(&self) -> FusionConfig {
        let c = self.config();
        FusionConfig::new(c.alpha, c.tau)
    }

    /// Baselines have a single branch, reported as both `p_gnn` and `p_knn`.
    pub fn predict(&self, z0: &[f64], config: &FusionConfig) -> Result<Prediction> {
        match self {
            Self::Signal { model, knn } => fusion::predict(z0, model, knn, config),
            Self::Baseline(m) => {
                config.validate()?;
                let p = m.class_probs(z0)?;
                let entropy = attention_entropy(&p)?;
                Ok(Prediction {
                    max_conf: p[argmax(&p)],
                    decision: route(&p, entropy, config),
                    p_gnn: p.clone(),
                    p_knn: p.clone(),
                    p_ens: p,
                    entropy,
                })
            }
        }
    }

    pub fn check_dim(&self, bundle: &EmbeddingBundle) -> Result<()> {
        let expected = self.config().input_dim;
        if bundle.dim != expected {
            return Err(Error::Shape(format!(
                "bundle dim {} does not match checkpoint input dim {expected}",
                bundle.dim
            )));
        }
        Ok(())
    }
}

/// Truth of a bundle label under a checkpoint's seen set; `None` when unlabeled.
pub fn truth_of(label_id: i32, seen_class_ids: &[i32]) -> Option<Truth> {
    if label_id == UNLABELED {
        return None;
    }
    Some(match seen_class_ids.iter().position(|&s| s == label_id) {
        Some(c) => Truth::Seen(c),
        None => Truth::Unseen,
    })
}

#[derive(Debug, Clone)]
pub struct SplitPredictions {
    /// Bundle record index of each prediction.
    pub records: Vec<usize>,
    pub predictions: Vec<Prediction>,
    pub truths: Vec<Truth>,
}

/// Predicts every labeled record of `split`; with `seen_only` the unseen
/// records are dropped as well.
pub fn predict_split(
    model: &LoadedModel,
    bundle: &EmbeddingBundle,
    split: &str,
    config: &FusionConfig,
    seen_only: bool,
) -> Result<SplitPredictions> {
    model.check_dim(bundle)?;
    let seen = &model.config().seen_class_ids;
    let mut out = SplitPredictions {
        records: Vec::new(),
        predictions: Vec::new(),
        truths: Vec::new(),
    };
    for &idx in bundle.split(split)? {
        let Some(truth) = truth_of(bundle.label_ids[idx], seen) else {
            continue;
        };
        if seen_only && truth == Truth::Unseen {
            continue;
        }
        out.predictions.push(model.predict(&bundle.row_f64(idx), config)?);
        out.truths.push(truth);
        out.records.push(idx);
    }
    Ok(out)
}

/// Runs the model over a split and scores it under `protocol`.
pub fn evaluate_split(
    model: &LoadedModel,
    bundle: &EmbeddingBundle,
    split: &str,
    config: &FusionConfig,
    protocol: Protocol,
) -> Result<MetricsReport> {
    match protocol {
        Protocol::Closed => {
            let preds = predict_split(model, bundle, split, config, true)?;
            if preds.predictions.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "split {split:?} has no records of the model's seen classes"
                )));
            }
            let truths: Vec<usize> = preds
                .truths
                .iter()
                .map(|t| match t {
                    Truth::Seen(c) => *c,
                    Truth::Unseen => unreachable!("filtered above"),
                })
                .collect();
            evaluate_closed(&preds.predictions, &truths)
        }
        Protocol::Open => {
            let preds = predict_split(model, bundle, split, config, false)?;
            if !preds.truths.contains(&Truth::Unseen) {
                return Err(Error::InvalidInput(format!(
                    "split {split:?} has no unseen-class records, so the open-set EER is undefined"
                )));
            }
            evaluate_open(&preds.predictions, &preds.truths)
        }
    }
}
