//! Differentiable layer primitives with hand-derived backward passes.
//!
//! Every `*_backward` function accumulates (`+=`) into the parameter
//! gradient slices it is given, so one buffer can collect a whole batch.

use super::tensor::{axpy, dot, Tensor};
use crate::error::{Error, Result};

/// `W x + b` for `W: [m × n]`.
pub fn dense_forward(x: &[f64], w: &Tensor, b: &[f64]) -> Result<Vec<f64>> {
    if w.rank() != 2 || w.cols() != x.len() || w.rows() != b.len() {
        return Err(Error::Shape(format!(
            "dense: weight {:?}, input {}, bias {}",
            w.dims(),
            x.len(),
            b.len()
        )));
    }
    Ok((0..w.rows()).map(|r| dot(w.row(r), x) + b[r]).collect())
}

/// Backward of [`dense_forward`]. Returns the input gradient when
/// `input_grad` is set.
pub fn dense_backward(
    x: &[f64],
    w: &Tensor,
    grad_out: &[f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    input_grad: bool,
) -> Option<Vec<f64>> {
    let n = x.len();
    for (r, &g) in grad_out.iter().enumerate() {
        grad_b[r] += g;
        if g != 0.0 {
            axpy(&mut grad_w[r * n..(r + 1) * n], g, x);
        }
    }
    input_grad.then(|| {
        let mut gx = vec![0.0; n];
        for (r, &g) in grad_out.iter().enumerate() {
            if g != 0.0 {
                axpy(&mut gx, g, w.row(r));
            }
        }
        gx
    })
}

/// Valid (unpadded), stride-1 1-D convolution.
///
/// `x: [C_in × L]`, `kernels: [C_out × C_in × k]`, `bias: [C_out]`,
/// output `[C_out × (L − k + 1)]`.
pub fn conv1d_forward(x: &Tensor, kernels: &Tensor, bias: &[f64]) -> Result<Tensor> {
    let (c_in, len) = seq_dims(x)?;
    if kernels.rank() != 3 || kernels.dims()[1] != c_in || kernels.dims()[0] != bias.len() {
        return Err(Error::Shape(format!(
            "conv1d: input {:?}, kernels {:?}, bias {}",
            x.dims(),
            kernels.dims(),
            bias.len()
        )));
    }
    let c_out = kernels.dims()[0];
    let k = kernels.dims()[2];
    if k == 0 || len < k {
        return Err(Error::Shape(format!(
            "conv1d: sequence length {len} shorter than kernel {k}"
        )));
    }
    let out_len = len - k + 1;
    let xd = x.data();
    let kd = kernels.data();
    let mut out = vec![0.0; c_out * out_len];
    for c in 0..c_out {
        let row = &mut out[c * out_len..(c + 1) * out_len];
        row.fill(bias[c]);
        for i in 0..c_in {
            let xi = &xd[i * len..(i + 1) * len];
            for j in 0..k {
                let kv = kd[(c * c_in + i) * k + j];
                axpy(row, kv, &xi[j..j + out_len]);
            }
        }
    }
    Tensor::new(vec![c_out, out_len], out)
}

/// Backward of [`conv1d_forward`].
pub fn conv1d_backward(
    x: &Tensor,
    kernels: &Tensor,
    grad_out: &Tensor,
    grad_kernels: &mut [f64],
    grad_bias: &mut [f64],
    input_grad: bool,
) -> Option<Tensor> {
    let (c_in, len) = (x.dims()[0], x.dims()[1]);
    let c_out = kernels.dims()[0];
    let k = kernels.dims()[2];
    let out_len = len - k + 1;
    let xd = x.data();
    let kd = kernels.data();
    let gd = grad_out.data();
    let mut gx = input_grad.then(|| vec![0.0; c_in * len]);
    for c in 0..c_out {
        let go = &gd[c * out_len..(c + 1) * out_len];
        grad_bias[c] += go.iter().sum::<f64>();
        for i in 0..c_in {
            let xi = &xd[i * len..(i + 1) * len];
            for j in 0..k {
                let idx = (c * c_in + i) * k + j;
                grad_kernels[idx] += dot(go, &xi[j..j + out_len]);
                if let Some(gx) = gx.as_mut() {
                    axpy(&mut gx[i * len + j..i * len + j + out_len], kd[idx], go);
                }
            }
        }
    }
    gx.map(|g| Tensor::new(vec![c_in, len], g).expect("input gradient shape"))
}

/// Output of [`maxpool1d`]: pooled values plus the flat input index each
/// output was taken from.
#[derive(Debug, Clone)]
pub struct Pooled {
    pub output: Tensor,
    pub argmax: Vec<usize>,
}

/// Non-overlapping max-pooling over the last axis of `[C × L]`. A trailing
/// partial window is dropped; ties resolve to the first maximal index.
pub fn maxpool1d(x: &Tensor, window: usize) -> Result<Pooled> {
    let (channels, len) = seq_dims(x)?;
    if window == 0 || len < window {
        return Err(Error::Shape(format!(
            "maxpool1d: sequence length {len} shorter than window {window}"
        )));
    }
    let out_len = len / window;
    let xd = x.data();
    let mut out = Vec::with_capacity(channels * out_len);
    let mut argmax = Vec::with_capacity(channels * out_len);
    for c in 0..channels {
        for t in 0..out_len {
            let start = c * len + t * window;
            let mut best = start;
            for idx in start + 1..start + window {
                if xd[idx] > xd[best] {
                    best = idx;
                }
            }
            out.push(xd[best]);
            argmax.push(best);
        }
    }
    Ok(Pooled {
        output: Tensor::new(vec![channels, out_len], out)?,
        argmax,
    })
}

/// Routes each output gradient to the input position it was pooled from.
pub fn maxpool1d_backward(pooled: &Pooled, grad_out: &[f64], input_dims: &[usize]) -> Tensor {
    let mut gx = Tensor::zeros(input_dims.to_vec());
    let gd = gx.data_mut();
    for (&idx, &g) in pooled.argmax.iter().zip(grad_out) {
        gd[idx] += g;
    }
    gx
}

pub fn relu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::new(x.dims().to_vec(), data).expect("same shape")
}

/// Zeroes `grad` wherever the pre-activation was not strictly positive.
pub fn relu_backward(pre_activation: &[f64], grad: &mut [f64]) {
    for (g, &p) in grad.iter_mut().zip(pre_activation) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Vector-Jacobian product of softmax: `p ⊙ (g − ⟨g, p⟩)`.
pub fn softmax_backward(p: &[f64], grad_p: &[f64]) -> Vec<f64> {
    let inner = dot(p, grad_p);
    p.iter().zip(grad_p).map(|(pi, gi)| pi * (gi - inner)).collect()
}

fn seq_dims(x: &Tensor) -> Result<(usize, usize)> {
    match x.dims() {
        [c, l] => Ok((*c, *l)),
        other => Err(Error::Shape(format!(
            "expected a [channels × length] sequence, got {other:?}"
        ))),
    }
}
