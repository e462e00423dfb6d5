//! Numeric building blocks: tensors, layers with reverse-mode gradients,
//! multi-head self-attention, and Adam.

mod attention;
mod ops;
mod param;
mod tensor;

pub use attention::{mha_backward, mha_forward, AttentionCache, AttentionGrads, AttentionWeights};
pub use ops::{
    conv1d_backward, conv1d_forward, dense_backward, dense_forward, maxpool1d,
    maxpool1d_backward, relu, relu_backward, softmax, softmax_backward, Pooled,
};
pub use param::{AdamConfig, GradBuffer, ParamId, ParamSet};
pub use tensor::Tensor;

pub(crate) use tensor::dot;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

/// Uniform in ±√(6 / (fan_in + fan_out)).
pub fn glorot_uniform<R: Rng + ?Sized>(
    dims: Vec<usize>,
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    let n: usize = dims.iter().product();
    let data = (0..n).map(|_| dist.sample(rng)).collect();
    Tensor::new(dims, data).expect("shape")
}

pub fn gaussian<R: Rng + ?Sized>(dims: Vec<usize>, std: f64, rng: &mut R) -> Tensor {
    let dist = Normal::new(0.0, std).expect("finite std");
    let n: usize = dims.iter().product();
    let data = (0..n).map(|_| dist.sample(rng)).collect();
    Tensor::new(dims, data).expect("shape")
}
