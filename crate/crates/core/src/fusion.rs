//! Convex fusion of the GNN and KNN branches and the seen/unseen routing rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::SIMPLEX_TOLERANCE;
use crate::knn::KnnIndex;
use crate::model::{argmax, SignalModel};

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_TAU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    /// Weight of the GNN branch.
    pub alpha: f64,
    /// Confidence threshold: `max(p_ens) < tau` routes to unseen.
    pub tau: f64,
    pub entropy_routing: bool,
    /// Entropy threshold (nats), consulted only when `entropy_routing` is set.
    pub tau_e: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            tau: DEFAULT_TAU,
            entropy_routing: false,
            tau_e: 0.0,
        }
    }
}

impl FusionConfig {
    pub fn new(alpha: f64, tau: f64) -> Self {
        Self {
            alpha,
            tau,
            ..Self::default()
        }
    }

    /// Enables the entropy rule with the default threshold `ln(N) / 2`.
    pub fn with_default_entropy_routing(mut self, classes: usize) -> Self {
        self.entropy_routing = true;
        self.tau_e = (classes as f64).ln() / 2.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::InvalidConfig(format!("tau {} outside [0, 1]", self.tau)));
        }
        if self.entropy_routing && !(self.tau_e >= 0.0) {
            return Err(Error::InvalidConfig(format!("tau_e {} must be ≥ 0", self.tau_e)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Seen(usize),
    Unseen,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub p_gnn: Vec<f64>,
    pub p_knn: Vec<f64>,
    pub p_ens: Vec<f64>,
    pub entropy: f64,
    pub max_conf: f64,
    pub decision: Decision,
}

/// JSON-lines record for one prediction.
#[derive(Debug, Serialize)]
pub struct PredictionRecord<'a> {
    pub p_gnn: &'a [f64],
    pub p_knn: &'a [f64],
    pub p_ens: &'a [f64],
    pub entropy: f64,
    pub max_conf: f64,
    pub decision: String,
}

impl Prediction {
    /// Same prediction routed under a different configuration.
    pub fn rerouted(&self, config: &FusionConfig) -> Prediction {
        Prediction {
            decision: route(&self.p_ens, self.entropy, config),
            ..self.clone()
        }
    }

    /// `decision` is `"seen:<class-name>"` or `"unseen"`.
    pub fn record<'a>(&'a self, class_names: &[String]) -> PredictionRecord<'a> {
        let decision = match self.decision {
            Decision::Seen(c) => format!(
                "seen:{}",
                class_names.get(c).map_or_else(|| c.to_string(), Clone::clone)
            ),
            Decision::Unseen => "unseen".to_string(),
        };
        PredictionRecord {
            p_gnn: &self.p_gnn,
            p_knn: &self.p_knn,
            p_ens: &self.p_ens,
            entropy: self.entropy,
            max_conf: self.max_conf,
            decision,
        }
    }
}

fn check_simplex(p: &[f64], what: &str) -> Result<()> {
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOLERANCE || p.iter().any(|&v| v < -SIMPLEX_TOLERANCE) {
        return Err(Error::InvalidInput(format!("{what} is off the simplex (sum {sum})")));
    }
    Ok(())
}

/// `α · p_gnn + (1 − α) · p_knn`.
pub fn fuse(p_gnn: &[f64], p_knn: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidConfig(format!("alpha {alpha} outside [0, 1]")));
    }
    if p_gnn.len() != p_knn.len() {
        return Err(Error::Shape(format!(
            "fusing distributions of length {} and {}",
            p_gnn.len(),
            p_knn.len()
        )));
    }
    check_simplex(p_gnn, "p_gnn")?;
    check_simplex(p_knn, "p_knn")?;
    // Endpoints return their branch verbatim.
    if alpha == 1.0 {
        return Ok(p_gnn.to_vec());
    }
    if alpha == 0.0 {
        return Ok(p_knn.to_vec());
    }
    Ok(p_gnn
        .iter()
        .zip(p_knn)
        .map(|(g, k)| alpha * g + (1.0 - alpha) * k)
        .collect())
}

pub fn route(p_ens: &[f64], entropy: f64, config: &FusionConfig) -> Decision {
    let best = argmax(p_ens);
    if p_ens[best] < config.tau {
        return Decision::Unseen;
    }
    if config.entropy_routing && entropy > config.tau_e {
        return Decision::Unseen;
    }
    Decision::Seen(best)
}

/// Encode, run both branches, fuse and route.
pub fn predict(
    z0: &[f64],
    model: &SignalModel,
    index: &KnnIndex,
    config: &FusionConfig,
) -> Result<Prediction> {
    config.validate()?;
    if index.classes() != model.config.classes {
        return Err(Error::Inconsistent(format!(
            "knn index covers {} classes, model {}",
            index.classes(),
            model.config.classes
        )));
    }
    let z = model.encode(z0)?;
    let gnn = model.gnn_output(&z)?;
    let p_knn = index.predict(&z)?;
    let p_ens = fuse(&gnn.p_gnn, &p_knn, config.alpha)?;
    let max_conf = p_ens[argmax(&p_ens)];
    let decision = route(&p_ens, gnn.entropy, config);
    Ok(Prediction {
        p_gnn: gnn.p_gnn,
        p_knn,
        p_ens,
        entropy: gnn.entropy,
        max_conf,
        decision,
    })
}
