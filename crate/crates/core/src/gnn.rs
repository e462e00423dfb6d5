//! Query-conditioned attention over learnable class prototypes.
//!
//! For a latent query `z`: `s = W_s z`, node features `ẽᵢ = eᵢ + s`,
//! refined nodes `ẽ′ = MHA(ẽ)`, logits `ℓᵢ = wᵀẽ′ᵢ`, `p = softmax(ℓ)`.
//! The graph is implicit: every class node attends to every other, and
//! the query enters only through the additive conditioning.

use rand::Rng;

use crate::encoder::LATENT_DIM;
use crate::error::{Error, Result};
use crate::nn::{
    dot, gaussian, glorot_uniform, mha_backward, mha_forward, softmax, softmax_backward,
    AttentionCache, AttentionGrads, AttentionWeights, GradBuffer, ParamId, ParamSet, Tensor,
};

pub const DEFAULT_HEADS: usize = 4;

/// Tolerance on `Σp = 1` accepted by [`attention_entropy`].
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GnnHead {
    classes: usize,
    width: usize,
    heads: usize,
    prototypes: ParamId,
    ws: ParamId,
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    wo: ParamId,
    logit_w: ParamId,
}

#[derive(Debug, Clone)]
pub struct GnnOutput {
    pub p_gnn: Vec<f64>,
    /// Shannon entropy of `p_gnn` in nats.
    pub entropy: f64,
    pub node_logits: Vec<f64>,
    /// Per-head `[N × N]` attention matrices.
    pub attention_weights: Vec<Tensor>,
}

#[derive(Debug, Clone)]
pub struct GnnTrace {
    query: Vec<f64>,
    cache: AttentionCache,
    refined: Tensor,
    pub output: GnnOutput,
}

impl GnnHead {
    pub fn init<R: Rng + ?Sized>(
        params: &mut ParamSet,
        classes: usize,
        width: usize,
        heads: usize,
        rng: &mut R,
    ) -> Result<Self> {
        validate(classes, width, heads)?;
        let d = width;
        let prototypes = params.add(
            "gnn.prototypes",
            gaussian(vec![classes, d], 1.0 / (d as f64).sqrt(), rng),
        )?;
        let ws = params.add("gnn.ws", glorot_uniform(vec![d, d], d, d, rng))?;
        let wq = params.add("gnn.attn.wq", glorot_uniform(vec![d, d], d, d, rng))?;
        let wk = params.add("gnn.attn.wk", glorot_uniform(vec![d, d], d, d, rng))?;
        let wv = params.add("gnn.attn.wv", glorot_uniform(vec![d, d], d, d, rng))?;
        let wo = params.add("gnn.attn.wo", glorot_uniform(vec![d, d], d, d, rng))?;
        let logit_w = params.add("gnn.logit_w", glorot_uniform(vec![d], d, 1, rng))?;
        Ok(Self {
            classes,
            width,
            heads,
            prototypes,
            ws,
            wq,
            wk,
            wv,
            wo,
            logit_w,
        })
    }

    pub fn bind(params: &ParamSet, classes: usize, width: usize, heads: usize) -> Result<Self> {
        validate(classes, width, heads)?;
        let get = |name: &str, dims: &[usize]| -> Result<ParamId> {
            let id = params
                .id(name)
                .ok_or_else(|| Error::Inconsistent(format!("missing tensor {name:?}")))?;
            params.value(id).expect_dims(name, dims)?;
            Ok(id)
        };
        let d = width;
        Ok(Self {
            classes,
            width,
            heads,
            prototypes: get("gnn.prototypes", &[classes, d])?,
            ws: get("gnn.ws", &[d, d])?,
            wq: get("gnn.attn.wq", &[d, d])?,
            wk: get("gnn.attn.wk", &[d, d])?,
            wv: get("gnn.attn.wv", &[d, d])?,
            wo: get("gnn.attn.wo", &[d, d])?,
            logit_w: get("gnn.logit_w", &[d])?,
        })
    }

    /// Default-width head over the encoder's latent space.
    pub fn init_latent<R: Rng + ?Sized>(
        params: &mut ParamSet,
        classes: usize,
        heads: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Self::init(params, classes, LATENT_DIM, heads, rng)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn prototypes_id(&self) -> ParamId {
        self.prototypes
    }

    fn weights<'a>(&self, params: &'a ParamSet) -> AttentionWeights<'a> {
        AttentionWeights {
            wq: params.value(self.wq),
            wk: params.value(self.wk),
            wv: params.value(self.wv),
            wo: params.value(self.wo),
        }
    }

    pub fn predict(&self, params: &ParamSet, z: &[f64]) -> Result<GnnOutput> {
        Ok(self.forward(params, z)?.output)
    }

    pub fn forward(&self, params: &ParamSet, z: &[f64]) -> Result<GnnTrace> {
        if z.len() != self.width {
            return Err(Error::Shape(format!(
                "gnn head expects a {}-dim query, got {}",
                self.width,
                z.len()
            )));
        }
        let ws = params.value(self.ws);
        let s: Vec<f64> = (0..self.width).map(|r| dot(ws.row(r), z)).collect();
        let mut nodes = params.value(self.prototypes).clone();
        for i in 0..self.classes {
            for (v, si) in nodes.row_mut(i).iter_mut().zip(&s) {
                *v += si;
            }
        }
        let (refined, cache) = mha_forward(&nodes, &self.weights(params), self.heads)?;
        let w = params.value(self.logit_w).data();
        let node_logits: Vec<f64> = (0..self.classes).map(|i| dot(w, refined.row(i))).collect();
        let p_gnn = softmax(&node_logits);
        let entropy = entropy_unchecked(&p_gnn);
        Ok(GnnTrace {
            query: z.to_vec(),
            output: GnnOutput {
                p_gnn,
                entropy,
                node_logits,
                attention_weights: cache.weights.clone(),
            },
            cache,
            refined,
        })
    }

    /// Accumulates parameter gradients given `∂L/∂ℓ`; returns `∂L/∂z`.
    pub fn backward(
        &self,
        params: &ParamSet,
        trace: &GnnTrace,
        grad_logits: &[f64],
        grads: &mut GradBuffer,
    ) -> Vec<f64> {
        let d = self.width;
        let w = params.value(self.logit_w).data();
        let mut g_refined = Tensor::zeros(vec![self.classes, d]);
        {
            let gw = grads.get_mut(self.logit_w);
            for (i, &gl) in grad_logits.iter().enumerate() {
                for (acc, v) in gw.iter_mut().zip(trace.refined.row(i)) {
                    *acc += gl * v;
                }
                for (out, wv) in g_refined.row_mut(i).iter_mut().zip(w) {
                    *out = gl * wv;
                }
            }
        }
        let [gq, gk, gv, go] = grads.many_mut([self.wq, self.wk, self.wv, self.wo]);
        let g_nodes = mha_backward(
            &trace.cache,
            &self.weights(params),
            &g_refined,
            AttentionGrads {
                wq: gq,
                wk: gk,
                wv: gv,
                wo: go,
            },
        );
        let mut g_s = vec![0.0; d];
        {
            let gp = grads.get_mut(self.prototypes);
            for i in 0..self.classes {
                let row = g_nodes.row(i);
                for (acc, v) in gp[i * d..(i + 1) * d].iter_mut().zip(row) {
                    *acc += v;
                }
                for (acc, v) in g_s.iter_mut().zip(row) {
                    *acc += v;
                }
            }
        }
        let ws = params.value(self.ws);
        let g_ws = grads.get_mut(self.ws);
        let mut g_z = vec![0.0; d];
        for (r, &gs) in g_s.iter().enumerate() {
            for (c, &zc) in trace.query.iter().enumerate() {
                g_ws[r * d + c] += gs * zc;
            }
            for (acc, wv) in g_z.iter_mut().zip(ws.row(r)) {
                *acc += gs * wv;
            }
        }
        g_z
    }
}

/// Gradient of the logits for the cross-entropy of `p = softmax(ℓ)` at `label`.
pub fn cross_entropy_logit_grad(p: &[f64], label: usize) -> Vec<f64> {
    let mut g = p.to_vec();
    g[label] -= 1.0;
    g
}

/// Chains an upstream `∂L/∂p` through the softmax.
pub fn probs_to_logit_grad(p: &[f64], grad_p: &[f64]) -> Vec<f64> {
    softmax_backward(p, grad_p)
}

fn validate(classes: usize, width: usize, heads: usize) -> Result<()> {
    if classes < 2 {
        return Err(Error::InvalidConfig(format!(
            "gnn head needs at least 2 classes, got {classes}"
        )));
    }
    if heads == 0 || width == 0 || width % heads != 0 {
        return Err(Error::InvalidConfig(format!(
            "width {width} is not divisible into {heads} heads"
        )));
    }
    Ok(())
}

fn entropy_unchecked(p: &[f64]) -> f64 {
    let h: f64 = p
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| -v * v.ln())
        .sum();
    h.max(0.0)
}

/// `−Σ pᵢ ln pᵢ` with `0 · ln 0 = 0`.
pub fn attention_entropy(p: &[f64]) -> Result<f64> {
    let sum: f64 = p.iter().sum();
    if p.is_empty()
        || (sum - 1.0).abs() > SIMPLEX_TOLERANCE
        || p.iter().any(|&v| !(-SIMPLEX_TOLERANCE..=1.0 + SIMPLEX_TOLERANCE).contains(&v))
    {
        return Err(Error::InvalidInput(format!(
            "distribution off the simplex (sum {sum})"
        )));
    }
    Ok(entropy_unchecked(p))
}
