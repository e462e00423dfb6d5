//! Projection from a pooled utterance embedding to the 64-dim latent space,
//! and the standalone FCN/CNN baseline classifiers built on the same layers.
//!
//! The embedding is read as a one-channel sequence of length `d₀` and passed
//! through conv(64, k=3) → ReLU → pool(2) → conv(128, k=3) → ReLU → pool(2),
//! flattened, then linearly projected to [`LATENT_DIM`].

mod baseline;
mod conv;

pub use baseline::{Baseline, BaselineTrace, BaselineVariant, HIDDEN_UNITS};
pub use conv::{ConvShape, ConvStack, ConvTrace, CONV1_FILTERS, CONV2_FILTERS, KERNEL, MIN_INPUT_DIM, POOL};

use rand::Rng;

use crate::error::Result;
use crate::nn::{dense_backward, dense_forward, glorot_uniform, GradBuffer, ParamId, ParamSet, Tensor};

pub const LATENT_DIM: usize = 64;

#[derive(Debug, Clone)]
pub struct Encoder {
    conv: ConvStack,
    proj_w: ParamId,
    proj_b: ParamId,
}

#[derive(Debug, Clone)]
pub struct EncoderTrace {
    pub conv: ConvTrace,
    pub latent: Vec<f64>,
}

impl Encoder {
    pub fn init<R: Rng + ?Sized>(params: &mut ParamSet, input_dim: usize, rng: &mut R) -> Result<Self> {
        let conv = ConvStack::init(params, "encoder", input_dim, rng)?;
        let flat = conv.shape.flat;
        let proj_w = params.add(
            "encoder.proj.weight",
            glorot_uniform(vec![LATENT_DIM, flat], flat, LATENT_DIM, rng),
        )?;
        let proj_b = params.add("encoder.proj.bias", Tensor::zeros(vec![LATENT_DIM]))?;
        Ok(Self { conv, proj_w, proj_b })
    }

    pub fn bind(params: &ParamSet, input_dim: usize) -> Result<Self> {
        let conv = ConvStack::bind(params, "encoder", input_dim)?;
        let flat = conv.shape.flat;
        Ok(Self {
            proj_w: conv::lookup(params, "encoder.proj.weight", &[LATENT_DIM, flat])?,
            proj_b: conv::lookup(params, "encoder.proj.bias", &[LATENT_DIM])?,
            conv,
        })
    }

    pub fn shape(&self) -> ConvShape {
        self.conv.shape
    }

    pub fn input_dim(&self) -> usize {
        self.conv.shape.input
    }

    pub fn encode(&self, params: &ParamSet, z0: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(params, z0)?.latent)
    }

    pub fn forward(&self, params: &ParamSet, z0: &[f64]) -> Result<EncoderTrace> {
        let conv = self.conv.forward(params, z0)?;
        let latent = dense_forward(
            conv.flat(),
            params.value(self.proj_w),
            params.value(self.proj_b).data(),
        )?;
        Ok(EncoderTrace { conv, latent })
    }

    /// Accumulates parameter gradients given `∂L/∂z`.
    pub fn backward(
        &self,
        params: &ParamSet,
        trace: &EncoderTrace,
        grad_latent: &[f64],
        grads: &mut GradBuffer,
    ) {
        let [gw, gb] = grads.many_mut([self.proj_w, self.proj_b]);
        let g_flat = dense_backward(
            trace.conv.flat(),
            params.value(self.proj_w),
            grad_latent,
            gw,
            gb,
            true,
        )
        .expect("input gradient requested");
        self.conv.backward(params, &trace.conv, &g_flat, grads);
    }
}
