//! Multi-head scaled dot-product self-attention over a set of node rows.
//!
//! No positional encodings, no residual path and no normalization: the
//! output projection of the concatenated heads replaces the node features.
//! Projections carry no bias terms.

use super::ops::{softmax, softmax_backward};
use super::tensor::{axpy, dot, Tensor};
use crate::error::{Error, Result};

/// Borrowed projection weights. `wq`, `wk`, `wv` are `[h·d_h × d]`,
/// `wo` is `[d × h·d_h]`; this module requires `d = h·d_h`.
#[derive(Debug, Clone, Copy)]
pub struct AttentionWeights<'a> {
    pub wq: &'a Tensor,
    pub wk: &'a Tensor,
    pub wv: &'a Tensor,
    pub wo: &'a Tensor,
}

/// Gradient accumulators matching [`AttentionWeights`].
pub struct AttentionGrads<'a> {
    pub wq: &'a mut [f64],
    pub wk: &'a mut [f64],
    pub wv: &'a mut [f64],
    pub wo: &'a mut [f64],
}

/// Intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct AttentionCache {
    heads: usize,
    input: Tensor,
    q: Tensor,
    k: Tensor,
    v: Tensor,
    /// Per-head `[N × N]` row-stochastic attention matrices.
    pub weights: Vec<Tensor>,
    concat: Tensor,
}

/// `a · bᵀ` for row-major `a: [n × p]`, `b: [m × p]`.
fn matmul_nt(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, m) = (a.rows(), b.rows());
    let mut out = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            out.push(dot(a.row(i), b.row(j)));
        }
    }
    Tensor::matrix(n, m, out).expect("matmul shape")
}

/// Slice of head `h` from a `[N × h·d_h]` row.
fn head(row: &[f64], h: usize, head_dim: usize) -> &[f64] {
    &row[h * head_dim..(h + 1) * head_dim]
}

pub fn mha_forward(
    x: &Tensor,
    w: &AttentionWeights<'_>,
    heads: usize,
) -> Result<(Tensor, AttentionCache)> {
    let d = x.cols();
    if x.rank() != 2 || x.rows() == 0 {
        return Err(Error::Shape(format!(
            "attention input must be a non-empty [N × d] matrix, got {:?}",
            x.dims()
        )));
    }
    if heads == 0 || d % heads != 0 {
        return Err(Error::Shape(format!(
            "model width {d} not divisible into {heads} heads"
        )));
    }
    for (name, t, dims) in [
        ("wq", w.wq, [d, d]),
        ("wk", w.wk, [d, d]),
        ("wv", w.wv, [d, d]),
        ("wo", w.wo, [d, d]),
    ] {
        t.expect_dims(name, &dims)?;
    }
    let head_dim = d / heads;
    let n = x.rows();
    let scale = 1.0 / (head_dim as f64).sqrt();

    let q = matmul_nt(x, w.wq);
    let k = matmul_nt(x, w.wk);
    let v = matmul_nt(x, w.wv);

    let mut concat = Tensor::zeros(vec![n, d]);
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let mut attn = Vec::with_capacity(n * n);
        for i in 0..n {
            let qi = head(q.row(i), h, head_dim);
            let scores: Vec<f64> = (0..n)
                .map(|j| dot(qi, head(k.row(j), h, head_dim)) * scale)
                .collect();
            let probs = softmax(&scores);
            let out = &mut concat.row_mut(i)[h * head_dim..(h + 1) * head_dim];
            for (j, &p) in probs.iter().enumerate() {
                axpy(out, p, head(v.row(j), h, head_dim));
            }
            attn.extend(probs);
        }
        weights.push(Tensor::matrix(n, n, attn)?);
    }
    let y = matmul_nt(&concat, w.wo);
    Ok((
        y,
        AttentionCache {
            heads,
            input: x.clone(),
            q,
            k,
            v,
            weights,
            concat,
        },
    ))
}

/// Accumulates weight gradients and returns the gradient w.r.t. the input rows.
pub fn mha_backward(
    cache: &AttentionCache,
    w: &AttentionWeights<'_>,
    grad_out: &Tensor,
    grads: AttentionGrads<'_>,
) -> Tensor {
    let x = &cache.input;
    let (n, d) = (x.rows(), x.cols());
    let heads = cache.heads;
    let head_dim = d / heads;
    let scale = 1.0 / (head_dim as f64).sqrt();

    // y = concat · woᵀ
    for i in 0..n {
        let gy = grad_out.row(i);
        let c = cache.concat.row(i);
        for (r, &g) in gy.iter().enumerate() {
            axpy(&mut grads.wo[r * d..(r + 1) * d], g, c);
        }
    }
    let mut g_concat = Tensor::zeros(vec![n, d]);
    for i in 0..n {
        let row = g_concat.row_mut(i);
        for (r, &g) in grad_out.row(i).iter().enumerate() {
            axpy(row, g, w.wo.row(r));
        }
    }

    let mut gq = Tensor::zeros(vec![n, d]);
    let mut gk = Tensor::zeros(vec![n, d]);
    let mut gv = Tensor::zeros(vec![n, d]);
    for h in 0..heads {
        let attn = &cache.weights[h];
        for i in 0..n {
            let go = head(g_concat.row(i), h, head_dim).to_vec();
            let probs = attn.row(i);
            // out_i = Σ_j a_ij v_j
            let g_probs: Vec<f64> = (0..n)
                .map(|j| dot(&go, head(cache.v.row(j), h, head_dim)))
                .collect();
            for (j, &p) in probs.iter().enumerate() {
                axpy(&mut gv.row_mut(j)[h * head_dim..(h + 1) * head_dim], p, &go);
            }
            let g_scores = softmax_backward(probs, &g_probs);
            let qi = head(cache.q.row(i), h, head_dim).to_vec();
            for (j, &gs) in g_scores.iter().enumerate() {
                let gs = gs * scale;
                if gs == 0.0 {
                    continue;
                }
                let kj = head(cache.k.row(j), h, head_dim).to_vec();
                axpy(&mut gq.row_mut(i)[h * head_dim..(h + 1) * head_dim], gs, &kj);
                axpy(&mut gk.row_mut(j)[h * head_dim..(h + 1) * head_dim], gs, &qi);
            }
        }
    }

    let mut gx = Tensor::zeros(vec![n, d]);
    for (proj, g_proj, g_w) in [
        (w.wq, &gq, grads.wq),
        (w.wk, &gk, grads.wk),
        (w.wv, &gv, grads.wv),
    ] {
        for i in 0..n {
            let xi = x.row(i);
            for (r, &g) in g_proj.row(i).iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                axpy(&mut g_w[r * d..(r + 1) * d], g, xi);
                axpy(gx.row_mut(i), g, proj.row(r));
            }
        }
    }
    gx
}
