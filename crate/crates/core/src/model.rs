use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{Checkpoint, ModelConfig, ModelKind};
use crate::encoder::{Baseline, Encoder, EncoderTrace, LATENT_DIM};
use crate::error::{Error, Result};
use crate::gnn::{cross_entropy_logit_grad, GnnHead, GnnOutput, GnnTrace};
use crate::knn::KnnIndex;
use crate::nn::{GradBuffer, ParamSet, Tensor};
use crate::train::cross_entropy;

/// Anything the training loop can fit with cross-entropy.
pub trait Classifier {
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
    fn classes(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn class_probs(&self, z0: &[f64]) -> Result<Vec<f64>>;

    /// Cross-entropy at `label`; accumulates its parameter gradient into `grads`.
    fn loss_and_grad(&self, z0: &[f64], label: usize, grads: &mut GradBuffer) -> Result<f64>;

    fn predict_class(&self, z0: &[f64]) -> Result<usize> {
        Ok(argmax(&self.class_probs(z0)?))
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Encoder plus prototype-attention head.
#[derive(Debug, Clone)]
pub struct SignalModel {
    pub config: ModelConfig,
    pub params: ParamSet,
    encoder: Encoder,
    gnn: GnnHead,
}

/// Forward intermediates for one sample.
#[derive(Debug, Clone)]
pub struct SignalTrace {
    pub encoder: EncoderTrace,
    pub gnn: GnnTrace,
}

impl SignalModel {
    /// Fresh parameters drawn from `ChaCha8Rng::seed_from_u64(seed)`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        if config.kind != ModelKind::Signal {
            return Err(Error::InvalidConfig(format!("expected a signal model config, got {:?}", config.kind)));
        }
        if config.latent_dim != LATENT_DIM {
            return Err(Error::InvalidConfig(format!(
                "latent width is fixed at {LATENT_DIM}, config says {}",
                config.latent_dim
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let encoder = Encoder::init(&mut params, config.input_dim, &mut rng)?;
        let gnn = GnnHead::init_latent(&mut params, config.classes, config.heads, &mut rng)?;
        Ok(Self {
            config,
            params,
            encoder,
            gnn,
        })
    }

    pub fn from_params(config: ModelConfig, params: ParamSet) -> Result<Self> {
        let encoder = Encoder::bind(&params, config.input_dim)?;
        let gnn = GnnHead::bind(&params, config.classes, config.latent_dim, config.heads)?;
        Ok(Self {
            config,
            params,
            encoder,
            gnn,
        })
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn gnn(&self) -> &GnnHead {
        &self.gnn
    }

    pub fn encode(&self, z0: &[f64]) -> Result<Vec<f64>> {
        self.encoder.encode(&self.params, z0)
    }

    pub fn gnn_output(&self, z: &[f64]) -> Result<GnnOutput> {
        self.gnn.predict(&self.params, z)
    }

    pub fn forward(&self, z0: &[f64]) -> Result<SignalTrace> {
        let encoder = self.encoder.forward(&self.params, z0)?;
        let gnn = self.gnn.forward(&self.params, &encoder.latent)?;
        Ok(SignalTrace { encoder, gnn })
    }

    /// Checkpoint holding the model tensors and the KNN index.
    pub fn to_checkpoint(&self, knn: &KnnIndex) -> Checkpoint {
        let mut tensors: Vec<(String, Tensor)> = self
            .params
            .named_tensors()
            .map(|(n, t)| (n.to_string(), t.clone()))
            .collect();
        tensors.push(("knn.latents".into(), knn.latents().clone()));
        tensors.push((
            "knn.labels".into(),
            Tensor::from_vec(knn.labels().iter().map(|&l| l as f64).collect()),
        ));
        let mut config = self.config.clone();
        config.k = knn.k();
        config.eps = knn.eps();
        Checkpoint { tensors, config }
    }

    pub fn from_checkpoint(cp: Checkpoint) -> Result<(Self, KnnIndex)> {
        if cp.config.kind != ModelKind::Signal {
            return Err(Error::Inconsistent(format!(
                "checkpoint holds a {:?} model, not a signal model",
                cp.config.kind
            )));
        }
        let mut params = ParamSet::new();
        let mut latents = None;
        let mut labels = None;
        for (name, t) in cp.tensors {
            match name.as_str() {
                "knn.latents" => latents = Some(t),
                "knn.labels" => labels = Some(t),
                _ => {
                    params.add(name, t)?;
                }
            }
        }
        let (latents, labels) = latents.zip(labels).ok_or_else(|| {
            Error::Inconsistent("checkpoint lacks knn.latents / knn.labels".into())
        })?;
        let labels = labels
            .data()
            .iter()
            .map(|&v| {
                if v >= 0.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(Error::Inconsistent(format!("knn label {v} is not a class index")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let knn = KnnIndex::fit(latents, labels, cp.config.classes, cp.config.k, cp.config.eps)?;
        let model = Self::from_params(cp.config, params)?;
        Ok((model, knn))
    }
}

impl Classifier for SignalModel {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn classes(&self) -> usize {
        self.config.classes
    }

    fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    fn class_probs(&self, z0: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(z0)?.gnn.output.p_gnn)
    }

    fn loss_and_grad(&self, z0: &[f64], label: usize, grads: &mut GradBuffer) -> Result<f64> {
        let trace = self.forward(z0)?;
        let p = &trace.gnn.output.p_gnn;
        let loss = cross_entropy(p, label)?;
        let g_logits = cross_entropy_logit_grad(p, label);
        let g_latent = self.gnn.backward(&self.params, &trace.gnn, &g_logits, grads);
        self.encoder
            .backward(&self.params, &trace.encoder, &g_latent, grads);
        Ok(loss)
    }
}

/// FCN or CNN baseline classifier with its config.
#[derive(Debug, Clone)]
pub struct BaselineModel {
    pub config: ModelConfig,
    pub params: ParamSet,
    net: Baseline,
}

impl BaselineModel {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let variant = config.kind.baseline_variant().ok_or_else(|| {
            Error::InvalidConfig("baseline model needs kind fcn or cnn".into())
        })?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let net = Baseline::init(&mut params, variant, config.input_dim, config.classes, &mut rng)?;
        Ok(Self { config, params, net })
    }

    pub fn net(&self) -> &Baseline {
        &self.net
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            tensors: self
                .params
                .named_tensors()
                .map(|(n, t)| (n.to_string(), t.clone()))
                .collect(),
            config: self.config.clone(),
        }
    }

    pub fn from_checkpoint(cp: Checkpoint) -> Result<Self> {
        let variant = cp.config.kind.baseline_variant().ok_or_else(|| {
            Error::Inconsistent("checkpoint does not hold a baseline model".into())
        })?;
        let mut params = ParamSet::new();
        for (name, t) in cp.tensors {
            params.add(name, t)?;
        }
        let net = Baseline::bind(&params, variant, cp.config.input_dim, cp.config.classes)?;
        Ok(Self {
            config: cp.config,
            params,
            net,
        })
    }
}

impl Classifier for BaselineModel {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn classes(&self) -> usize {
        self.config.classes
    }

    fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    fn class_probs(&self, z0: &[f64]) -> Result<Vec<f64>> {
        self.net.predict(&self.params, z0)
    }

    fn loss_and_grad(&self, z0: &[f64], label: usize, grads: &mut GradBuffer) -> Result<f64> {
        let trace = self.net.forward(&self.params, z0)?;
        let loss = cross_entropy(&trace.probs, label)?;
        let g_logits = cross_entropy_logit_grad(&trace.probs, label);
        self.net.backward(&self.params, &trace, &g_logits, grads);
        Ok(loss)
    }
}
