//! Finite-difference checker, brute-force oracles and random fixtures shared
//! by the integration tests and the acceptance runner.
#![allow(dead_code)]

pub mod suites;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use srctrace::checkpoint::{ModelConfig, ModelKind};
use srctrace::encoder::{Baseline, BaselineVariant, Encoder, LATENT_DIM};
use srctrace::gnn::{cross_entropy_logit_grad, GnnHead};
use srctrace::model::{Classifier, SignalModel};
use srctrace::nn::{
    conv1d_backward, conv1d_forward, dense_backward, dense_forward, maxpool1d, maxpool1d_backward,
    mha_backward, mha_forward, relu, relu_backward, softmax, softmax_backward, AttentionGrads,
    AttentionWeights, GradBuffer, ParamSet, Tensor,
};

pub const FD_STEP: f64 = 1e-5;
/// Absolute floor of the relative-error denominator, so that gradients at
/// round-off scale are compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn rand_tensor(rng: &mut impl Rng, dims: Vec<usize>) -> Tensor {
    let n = dims.iter().product();
    Tensor::new(dims, randn(rng, n)).unwrap()
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, Default)]
pub struct GradStats {
    pub rels: Vec<f64>,
    /// Coordinates left out because `θ ± h` crossed a ReLU or pooling boundary.
    pub skipped: usize,
}

impl GradStats {
    pub fn worst(&self) -> f64 {
        self.rels.iter().copied().fold(0.0, f64::max)
    }

    pub fn median(&self) -> f64 {
        let mut v = self.rels.clone();
        v.sort_by(f64::total_cmp);
        v.get(v.len() / 2).copied().unwrap_or(0.0)
    }

    pub fn merge(&mut self, other: GradStats) {
        self.rels.extend(other.rels);
        self.skipped += other.skipped;
    }
}

/// Loss value plus the discrete pattern (ReLU signs, pooling winners) of
/// the piecewise-smooth region it was evaluated in.
pub type Eval = (f64, Vec<usize>);

/// Central differences on up to `per_block` random coordinates of every block.
pub fn check_blocks(
    blocks: &mut [Vec<f64>],
    analytic: &[Vec<f64>],
    per_block: usize,
    rng: &mut impl Rng,
    loss: &mut dyn FnMut(&[Vec<f64>]) -> Eval,
) -> GradStats {
    assert_eq!(blocks.len(), analytic.len());
    let (_, base_pattern) = loss(blocks);
    let mut stats = GradStats::default();
    for b in 0..blocks.len() {
        assert_eq!(blocks[b].len(), analytic[b].len(), "block {b} layout");
        let n = blocks[b].len();
        let coords: Vec<usize> = if n <= per_block {
            (0..n).collect()
        } else {
            (0..per_block).map(|_| rng.random_range(0..n)).collect()
        };
        for j in coords {
            let orig = blocks[b][j];
            blocks[b][j] = orig + FD_STEP;
            let (plus, p_plus) = loss(blocks);
            blocks[b][j] = orig - FD_STEP;
            let (minus, p_minus) = loss(blocks);
            blocks[b][j] = orig;
            if p_plus != base_pattern || p_minus != base_pattern {
                stats.skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            stats.rels.push(rel_err(analytic[b][j], numeric));
        }
    }
    stats
}

/// Parameter blocks of `params` followed by `extra` input blocks.
pub fn check_params(
    params: &ParamSet,
    analytic: &GradBuffer,
    extra: Vec<(Vec<f64>, Vec<f64>)>,
    per_block: usize,
    rng: &mut impl Rng,
    loss: &dyn Fn(&ParamSet, &[Vec<f64>]) -> Eval,
) -> GradStats {
    let ids: Vec<_> = params.ids().collect();
    let mut blocks: Vec<Vec<f64>> = ids.iter().map(|&id| params.value(id).data().to_vec()).collect();
    let mut grads: Vec<Vec<f64>> = ids.iter().map(|&id| analytic.get(id).to_vec()).collect();
    for (v, g) in extra {
        blocks.push(v);
        grads.push(g);
    }
    let n_params = ids.len();
    let mut eval = |bl: &[Vec<f64>]| {
        let mut p = params.clone();
        for (&id, b) in ids.iter().zip(bl) {
            p.value_mut(id).data_mut().copy_from_slice(b);
        }
        loss(&p, &bl[n_params..])
    };
    check_blocks(&mut blocks, &grads, per_block, rng, &mut eval)
}

fn linear(r: &[f64], out: &[f64]) -> f64 {
    r.iter().zip(out).map(|(a, b)| a * b).sum()
}

fn ce(p: &[f64], y: usize) -> f64 {
    -p[y].max(1e-12).ln()
}

pub fn check_dense(rng: &mut ChaCha8Rng) -> GradStats {
    let (n_in, n_out) = (rng.random_range(1..12), rng.random_range(1..12));
    let x = randn(rng, n_in);
    let w = randn(rng, n_in * n_out);
    let b = randn(rng, n_out);
    let r = randn(rng, n_out);
    let wt = Tensor::matrix(n_out, n_in, w.clone()).unwrap();
    let (mut gw, mut gb) = (vec![0.0; w.len()], vec![0.0; n_out]);
    let gx = dense_backward(&x, &wt, &r, &mut gw, &mut gb, true).unwrap();
    let mut blocks = vec![x, w, b];
    check_blocks(&mut blocks, &[gx, gw, gb], 64, rng, &mut |bl| {
        let wt = Tensor::matrix(n_out, n_in, bl[1].clone()).unwrap();
        (linear(&r, &dense_forward(&bl[0], &wt, &bl[2]).unwrap()), vec![])
    })
}

pub fn check_conv1d(rng: &mut ChaCha8Rng) -> GradStats {
    let c_in = rng.random_range(1..4);
    let c_out = rng.random_range(1..5);
    let k = rng.random_range(1..4);
    let len = rng.random_range(k..k + 8);
    let x = rand_tensor(rng, vec![c_in, len]);
    let kern = rand_tensor(rng, vec![c_out, c_in, k]);
    let b = randn(rng, c_out);
    let out = conv1d_forward(&x, &kern, &b).unwrap();
    let r = rand_tensor(rng, out.dims().to_vec());
    let (mut gk, mut gb) = (vec![0.0; kern.len()], vec![0.0; c_out]);
    let gx = conv1d_backward(&x, &kern, &r, &mut gk, &mut gb, true).unwrap();
    let mut blocks = vec![x.data().to_vec(), kern.data().to_vec(), b];
    check_blocks(&mut blocks, &[gx.into_data(), gk, gb], 64, rng, &mut |bl| {
        let x = Tensor::new(vec![c_in, len], bl[0].clone()).unwrap();
        let kern = Tensor::new(vec![c_out, c_in, k], bl[1].clone()).unwrap();
        (linear(r.data(), conv1d_forward(&x, &kern, &bl[2]).unwrap().data()), vec![])
    })
}

/// ReLU then max-pool, the non-smooth pair of the conv stack.
pub fn check_relu_pool(rng: &mut ChaCha8Rng) -> GradStats {
    let (c, len) = (rng.random_range(1..4), rng.random_range(2..12));
    let window = 2;
    let x = rand_tensor(rng, vec![c, len]);
    let eval = |x: &Tensor| {
        let a = relu(x);
        let pooled = maxpool1d(&a, window).unwrap();
        let mut pattern: Vec<usize> = x.data().iter().map(|&v| usize::from(v > 0.0)).collect();
        pattern.extend(&pooled.argmax);
        (pooled, pattern)
    };
    let (pooled, _) = eval(&x);
    let r = randn(rng, pooled.output.len());
    let mut g = maxpool1d_backward(&pooled, &r, x.dims());
    relu_backward(x.data(), g.data_mut());
    let mut blocks = vec![x.data().to_vec()];
    check_blocks(&mut blocks, &[g.into_data()], 64, rng, &mut |bl| {
        let x = Tensor::new(vec![c, len], bl[0].clone()).unwrap();
        let (pooled, pattern) = eval(&x);
        (linear(&r, pooled.output.data()), pattern)
    })
}

pub fn check_softmax(rng: &mut ChaCha8Rng) -> GradStats {
    let n = rng.random_range(2..10);
    let x: Vec<f64> = randn(rng, n).into_iter().map(|v| 3.0 * v).collect();
    let r = randn(rng, n);
    let g = softmax_backward(&softmax(&x), &r);
    let y = rng.random_range(0..n);
    let g_ce = cross_entropy_logit_grad(&softmax(&x), y);
    let mut stats = check_blocks(&mut [x.clone()], &[g], 64, rng, &mut |bl| {
        (linear(&r, &softmax(&bl[0])), vec![])
    });
    stats.merge(check_blocks(&mut [x], &[g_ce], 64, rng, &mut |bl| {
        (ce(&softmax(&bl[0]), y), vec![])
    }));
    stats
}

fn weights(w: &[Tensor]) -> AttentionWeights<'_> {
    AttentionWeights {
        wq: &w[0],
        wk: &w[1],
        wv: &w[2],
        wo: &w[3],
    }
}

pub fn check_mha(rng: &mut ChaCha8Rng) -> GradStats {
    let heads = [1, 2, 4][rng.random_range(0..3)];
    let d = heads * rng.random_range(1..4);
    let n = rng.random_range(1..6);
    let x = rand_tensor(rng, vec![n, d]);
    // Init-scale weights; unit-variance ones saturate the attention rows and
    // shrink the gradients to round-off level.
    let scale = 1.0 / (d as f64).sqrt();
    let ws: Vec<Tensor> = (0..4)
        .map(|_| Tensor::matrix(d, d, randn(rng, d * d).into_iter().map(|v| v * scale).collect()).unwrap())
        .collect();
    let (y, cache) = mha_forward(&x, &weights(&ws), heads).unwrap();
    let r = rand_tensor(rng, y.dims().to_vec());
    let mut g: Vec<Vec<f64>> = vec![vec![0.0; d * d]; 4];
    let gx = {
        let [gq, gk, gv, go] = g.get_disjoint_mut([0, 1, 2, 3]).unwrap();
        mha_backward(
            &cache,
            &weights(&ws),
            &r,
            AttentionGrads {
                wq: gq,
                wk: gk,
                wv: gv,
                wo: go,
            },
        )
    };
    let mut blocks = vec![x.data().to_vec()];
    blocks.extend(ws.iter().map(|t| t.data().to_vec()));
    let mut analytic = vec![gx.into_data()];
    analytic.extend(g);
    check_blocks(&mut blocks, &analytic, 48, rng, &mut |bl| {
        let x = Tensor::matrix(n, d, bl[0].clone()).unwrap();
        let w: Vec<Tensor> = bl[1..].iter().map(|v| Tensor::matrix(d, d, v.clone()).unwrap()).collect();
        let (y, _) = mha_forward(&x, &weights(&w), heads).unwrap();
        (linear(r.data(), y.data()), vec![])
    })
}

/// GNN head alone under cross-entropy: prototypes, `W_s`, attention, `w` and the query.
pub fn check_gnn(rng: &mut ChaCha8Rng) -> GradStats {
    let heads = [1, 2, 4][rng.random_range(0..3)];
    let width = heads * rng.random_range(1..4);
    let classes = rng.random_range(2..6);
    let mut params = ParamSet::new();
    let head = GnnHead::init(&mut params, classes, width, heads, rng).unwrap();
    let z = randn(rng, width);
    let y = rng.random_range(0..classes);
    let trace = head.forward(&params, &z).unwrap();
    let mut grads = params.grad_buffer();
    let g_logits = cross_entropy_logit_grad(&trace.output.p_gnn, y);
    let gz = head.backward(&params, &trace, &g_logits, &mut grads);
    check_params(&params, &grads, vec![(z, gz)], 32, rng, &|p, extra| {
        let head = GnnHead::bind(p, classes, width, heads).unwrap();
        (ce(&head.predict(p, &extra[0]).unwrap().p_gnn, y), vec![])
    })
}

pub fn check_encoder(rng: &mut ChaCha8Rng) -> GradStats {
    let d0 = rng.random_range(10..24);
    let mut params = ParamSet::new();
    let enc = Encoder::init(&mut params, d0, rng).unwrap();
    let z0 = randn(rng, d0);
    let r = randn(rng, LATENT_DIM);
    let trace = enc.forward(&params, &z0).unwrap();
    let mut grads = params.grad_buffer();
    enc.backward(&params, &trace, &r, &mut grads);
    check_params(&params, &grads, vec![], 24, rng, &|p, _| {
        let enc = Encoder::bind(p, d0).unwrap();
        let t = enc.forward(p, &z0).unwrap();
        (linear(&r, &t.latent), t.conv.activation_pattern())
    })
}

pub fn check_baseline(rng: &mut ChaCha8Rng, variant: BaselineVariant) -> GradStats {
    let d0 = rng.random_range(10..24);
    let classes = rng.random_range(2..6);
    let mut params = ParamSet::new();
    let net = Baseline::init(&mut params, variant, d0, classes, rng).unwrap();
    let z0 = randn(rng, d0);
    let y = rng.random_range(0..classes);
    let trace = net.forward(&params, &z0).unwrap();
    let mut grads = params.grad_buffer();
    net.backward(&params, &trace, &cross_entropy_logit_grad(&trace.probs, y), &mut grads);
    check_params(&params, &grads, vec![], 24, rng, &|p, _| {
        let net = Baseline::bind(p, variant, d0, classes).unwrap();
        let t = net.forward(p, &z0).unwrap();
        (ce(&t.probs, y), t.activation_pattern())
    })
}

pub fn signal_config(input_dim: usize, classes: usize, heads: usize) -> ModelConfig {
    ModelConfig {
        kind: ModelKind::Signal,
        input_dim,
        classes,
        latent_dim: LATENT_DIM,
        heads,
        alpha: 0.5,
        tau: 0.5,
        k: 5,
        eps: 1e-8,
        seen_class_ids: (0..classes as i32).collect(),
        class_names: (0..classes).map(|c| format!("gen{c}")).collect(),
    }
}

/// Encoder → GNN → cross-entropy, through the model's own loss path.
pub fn check_composite(rng: &mut ChaCha8Rng) -> GradStats {
    let d0 = rng.random_range(10..24);
    let classes = rng.random_range(2..6);
    let heads = [1, 2, 4][rng.random_range(0..3)];
    let config = signal_config(d0, classes, heads);
    let model = SignalModel::init(config.clone(), rng.random()).unwrap();
    let z0 = randn(rng, d0);
    let y = rng.random_range(0..classes);
    let mut grads = model.params.grad_buffer();
    model.loss_and_grad(&z0, y, &mut grads).unwrap();
    check_params(&model.params, &grads, vec![], 16, rng, &|p, _| {
        let m = SignalModel::from_params(config.clone(), p.clone()).unwrap();
        let t = m.forward(&z0).unwrap();
        (ce(&t.gnn.output.p_gnn, y), t.encoder.conv.activation_pattern())
    })
}

pub struct GradCase {
    pub name: String,
    pub stats: GradStats,
}

/// 34 random configurations: 3 each of the primitive ops, attention and the
/// GNN head, 2 encoders, 2 of each baseline, 10 full composites.
pub fn gradient_suite(seed: u64) -> Vec<GradCase> {
    let mut rng = rng(seed);
    let mut cases = Vec::new();
    let mut run = |name: &str, reps: usize, f: &mut dyn FnMut(&mut ChaCha8Rng) -> GradStats| {
        for i in 0..reps {
            cases.push(GradCase {
                name: format!("{name}#{i}"),
                stats: f(&mut rng),
            });
        }
    };
    run("dense", 3, &mut check_dense);
    run("conv1d", 3, &mut check_conv1d);
    run("relu+maxpool", 3, &mut check_relu_pool);
    run("softmax+ce", 3, &mut check_softmax);
    run("mha", 3, &mut check_mha);
    run("gnn-head", 3, &mut check_gnn);
    run("encoder", 2, &mut check_encoder);
    run("baseline-fcn", 2, &mut |r| check_baseline(r, BaselineVariant::Fcn));
    run("baseline-cnn", 2, &mut |r| check_baseline(r, BaselineVariant::Cnn));
    run("composite", 10, &mut check_composite);
    cases
}

/// Random point on the open simplex.
pub fn rand_simplex(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

pub fn on_simplex(p: &[f64], tol: f64) -> bool {
    (p.iter().sum::<f64>() - 1.0).abs() <= tol && p.iter().all(|&v| v >= 0.0)
}
