//! Randomized property and oracle suites, each summarized as one outcome.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;

use srctrace::bundle::{read_bundle, write_bundle, EMBEDDINGS_FILE, LABELS_FILE, MANIFEST_FILE};
use srctrace::checkpoint::{decode_checkpoint, encode_checkpoint, ModelKind};
use srctrace::fusion::{fuse, predict, route, Decision, FusionConfig};
use srctrace::gnn::{attention_entropy, GnnHead};
use srctrace::knn::KnnIndex;
use srctrace::metrics::{compute_eer, pca_project};
use srctrace::model::SignalModel;
use srctrace::nn::{mha_forward, softmax, AttentionWeights, ParamSet, Tensor};
use srctrace::Error;

use super::oracles::{brute_eer, brute_knn, covariance, jacobi_eigenvalues};
use super::{on_simplex, rand_simplex, randn, rng, signal_config};

#[derive(Debug)]
pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

fn rand_points(rng: &mut impl Rng, m: usize, d: usize) -> Vec<Vec<f64>> {
    (0..m).map(|_| randn(rng, d)).collect()
}

fn index_of(points: &[Vec<f64>], labels: &[usize], classes: usize, k: usize, eps: f64) -> KnnIndex {
    let d = points[0].len();
    let t = Tensor::matrix(points.len(), d, points.concat()).unwrap();
    KnnIndex::fit(t, labels.to_vec(), classes, k, eps).unwrap()
}

/// Largest absolute gap between `KnnIndex::predict` and the exhaustive oracle.
pub fn knn_oracle(seed: u64, instances: usize) -> f64 {
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for case in 0..instances {
        let m = rng.random_range(1..=50);
        let d = rng.random_range(1..=8);
        let classes = rng.random_range(2..=5);
        let k = rng.random_range(1..=m);
        let eps = 10f64.powf(rng.random_range(-8.0..-2.0));
        let mut points = rand_points(&mut rng, m, d);
        // Every fourth instance carries exact duplicates to exercise tie-breaking.
        if case % 4 == 0 && m > 2 {
            for _ in 0..m / 3 {
                let (a, b) = (rng.random_range(0..m), rng.random_range(0..m));
                points[a] = points[b].clone();
            }
        }
        let labels: Vec<usize> = (0..m).map(|_| rng.random_range(0..classes)).collect();
        let index = index_of(&points, &labels, classes, k, eps);
        let z = if case % 5 == 0 {
            points[rng.random_range(0..m)].clone()
        } else {
            randn(&mut rng, d)
        };
        let got = index.predict(&z).unwrap();
        let want = brute_knn(&points, &labels, classes, k, eps, &z);
        for (g, w) in got.iter().zip(&want) {
            worst = worst.max((g - w).abs());
        }
    }
    worst
}

/// Largest gap between `compute_eer` and the exhaustive threshold sweep.
pub fn eer_oracle(seed: u64, instances: usize) -> f64 {
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for case in 0..instances {
        let n = rng.random_range(2..=100);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        labels[0] = true;
        labels[1] = false;
        labels.shuffle(&mut rng);
        let shift = rng.random_range(0.0..1.5);
        let mut scores: Vec<f64> = labels
            .iter()
            .map(|&l| rng.random::<f64>() + if l { shift } else { 0.0 })
            .collect();
        // Coarse scores produce ties, including across classes.
        if case % 3 == 0 {
            for s in &mut scores {
                *s = (*s * 4.0).round() / 4.0;
            }
        }
        let got = compute_eer(&scores, &labels).unwrap();
        worst = worst.max((got - brute_eer(&scores, &labels)).abs());
    }
    worst
}

/// Largest relative gap between projected variances and Jacobi eigenvalues.
pub fn pca_oracle(seed: u64, instances: usize) -> f64 {
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let d = rng.random_range(2..=8);
        let m = rng.random_range(d + 2..60);
        let scales: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..3.0)).collect();
        let mix = randn(&mut rng, d * d);
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                let u: Vec<f64> = randn(&mut rng, d).iter().zip(&scales).map(|(a, s)| a * s).collect();
                (0..d).map(|i| (0..d).map(|j| mix[i * d + j] * u[j]).sum()).collect()
            })
            .collect();
        let eig = jacobi_eigenvalues(covariance(&rows));
        let p = pca_project(&Tensor::matrix(m, d, rows.concat()).unwrap(), rng.random()).unwrap();
        for (v, e) in p.variances.iter().zip(&eig) {
            worst = worst.max((v - e).abs() / e.abs().max(1.0));
        }
    }
    worst
}

fn small_head(rng: &mut impl Rng, classes: usize) -> (ParamSet, GnnHead) {
    let mut params = ParamSet::new();
    let head = GnnHead::init(&mut params, classes, 8, 2, rng).unwrap();
    (params, head)
}

/// Branch and fused outputs stay on the simplex; entropy stays in `[0, ln N]`.
pub fn simplex_entropy(seed: u64, cases: usize) -> Outcome {
    let mut rng = rng(seed);
    let mut worst_sum = 0.0f64;
    let mut failures = Vec::new();
    let tol = 1e-9;
    for case in 0..cases {
        let classes = rng.random_range(2..=8);
        let (params, head) = small_head(&mut rng, classes);
        let scale = [0.1, 1.0, 10.0, 100.0][case % 4];
        let z: Vec<f64> = randn(&mut rng, 8).iter().map(|v| v * scale).collect();
        let out = head.predict(&params, &z).unwrap();
        let m = rng.random_range(1..30);
        let points = rand_points(&mut rng, m, 8);
        let labels: Vec<usize> = (0..m).map(|_| rng.random_range(0..classes)).collect();
        let index = index_of(&points, &labels, classes, rng.random_range(1..=m), 1e-8);
        let p_knn = index.predict(&z).unwrap();
        let p_ens = fuse(&out.p_gnn, &p_knn, rng.random()).unwrap();
        for (name, p) in [("p_gnn", &out.p_gnn), ("p_knn", &p_knn), ("p_ens", &p_ens)] {
            worst_sum = worst_sum.max((p.iter().sum::<f64>() - 1.0).abs());
            if !on_simplex(p, tol) {
                failures.push(format!("case {case}: {name} off simplex"));
            }
        }
        let ln_n = (classes as f64).ln();
        if !(out.entropy >= 0.0 && out.entropy <= ln_n + 1e-12) {
            failures.push(format!("case {case}: entropy {} outside [0, {ln_n}]", out.entropy));
        }
    }
    // Whole-model path on a small input width.
    for case in 0..5 {
        let classes = 2 + case % 3;
        let model = SignalModel::init(signal_config(16, classes, 4), case as u64).unwrap();
        let m = 12;
        let latents: Vec<f64> = randn(&mut rng, m * 64);
        let labels = (0..m).map(|i| i % classes).collect();
        let index = KnnIndex::fit(Tensor::matrix(m, 64, latents).unwrap(), labels, classes, 5, 1e-8).unwrap();
        let p = predict(&randn(&mut rng, 16), &model, &index, &FusionConfig::default()).unwrap();
        for v in [&p.p_gnn, &p.p_knn, &p.p_ens] {
            if !on_simplex(v, tol) {
                failures.push(format!("model case {case}: output off simplex"));
            }
        }
    }
    let mut fixed = 0.0f64;
    for n in 2..=16 {
        let mut one_hot = vec![0.0; n];
        one_hot[n / 2] = 1.0;
        fixed = fixed.max(attention_entropy(&one_hot).unwrap().abs());
        let uniform = vec![1.0 / n as f64; n];
        fixed = fixed.max((attention_entropy(&uniform).unwrap() - (n as f64).ln()).abs());
    }
    if fixed > 1e-12 {
        failures.push(format!("entropy fixed points off by {fixed:.3e}"));
    }
    Outcome::new(
        failures.is_empty(),
        format!(
            "{cases} random heads + 5 models, max |Σp − 1| = {worst_sum:.1e}, fixed-point error {fixed:.1e}{}",
            failures.first().map(|f| format!("; first failure: {f}")).unwrap_or_default()
        ),
    )
}

pub struct SymmetryReport {
    pub name: &'static str,
    pub cases: usize,
    pub max_err: f64,
    pub tol: f64,
}

impl SymmetryReport {
    pub fn pass(&self) -> bool {
        self.cases >= 50 && self.max_err <= self.tol
    }
}

pub fn symmetry_suites(seed: u64, cases: usize) -> Vec<SymmetryReport> {
    let mut rng = rng(seed);
    let mut reports = Vec::new();

    // Relabeling prototypes permutes p_gnn the same way.
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let classes = rng.random_range(2..=7);
        let (mut params, head) = small_head(&mut rng, classes);
        let z = randn(&mut rng, 8);
        let before = head.predict(&params, &z).unwrap().p_gnn;
        let mut perm: Vec<usize> = (0..classes).collect();
        perm.shuffle(&mut rng);
        let protos = params.value(head.prototypes_id()).clone();
        let permuted: Vec<f64> = perm.iter().flat_map(|&i| protos.row(i).to_vec()).collect();
        params.value_mut(head.prototypes_id()).data_mut().copy_from_slice(&permuted);
        let after = head.predict(&params, &z).unwrap().p_gnn;
        for (i, &src) in perm.iter().enumerate() {
            worst = worst.max((after[i] - before[src]).abs());
        }
    }
    reports.push(SymmetryReport { name: "prototype permutation equivariance", cases, max_err: worst, tol: 1e-12 });

    let mut worst = 0.0f64;
    for _ in 0..cases {
        let n = rng.random_range(2..=10);
        let x: Vec<f64> = randn(&mut rng, n).iter().map(|v| v * 5.0).collect();
        let c = rng.random_range(-100.0..100.0);
        let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
        for (a, b) in softmax(&x).iter().zip(softmax(&shifted)) {
            worst = worst.max((a - b).abs());
        }
    }
    reports.push(SymmetryReport { name: "softmax shift invariance", cases, max_err: worst, tol: 1e-12 });

    // Duplicate input rows of self-attention yield identical output rows.
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let heads = [1, 2, 4][rng.random_range(0..3)];
        let d = heads * rng.random_range(1..=4);
        let n = rng.random_range(2..=6);
        let mut x = randn(&mut rng, n * d);
        let (a, b) = (0, rng.random_range(1..n));
        let row: Vec<f64> = x[a * d..(a + 1) * d].to_vec();
        x[b * d..(b + 1) * d].copy_from_slice(&row);
        let ws: Vec<Tensor> = (0..4).map(|_| Tensor::matrix(d, d, randn(&mut rng, d * d)).unwrap()).collect();
        let w = AttentionWeights { wq: &ws[0], wk: &ws[1], wv: &ws[2], wo: &ws[3] };
        let (y, _) = mha_forward(&Tensor::matrix(n, d, x).unwrap(), &w, heads).unwrap();
        for (p, q) in y.row(a).iter().zip(y.row(b)) {
            worst = worst.max((p - q).abs());
        }
    }
    reports.push(SymmetryReport { name: "attention set symmetry", cases, max_err: worst, tol: 0.0 });

    let mut worst = 0.0f64;
    for _ in 0..cases {
        let m = rng.random_range(2..=40);
        let d = rng.random_range(1..=8);
        let classes = rng.random_range(2..=4);
        let points = rand_points(&mut rng, m, d);
        let labels: Vec<usize> = (0..m).map(|_| rng.random_range(0..classes)).collect();
        let k = rng.random_range(1..=m);
        let z = randn(&mut rng, d);
        let t: Vec<f64> = randn(&mut rng, d).iter().map(|v| v * 3.0).collect();
        let moved: Vec<Vec<f64>> = points.iter().map(|p| p.iter().zip(&t).map(|(a, b)| a + b).collect()).collect();
        let zt: Vec<f64> = z.iter().zip(&t).map(|(a, b)| a + b).collect();
        let before = index_of(&points, &labels, classes, k, 1e-8).predict(&z).unwrap();
        let after = index_of(&moved, &labels, classes, k, 1e-8).predict(&zt).unwrap();
        for (a, b) in before.iter().zip(after) {
            worst = worst.max((a - b).abs());
        }
    }
    reports.push(SymmetryReport { name: "knn translation invariance", cases, max_err: worst, tol: 1e-9 });

    // A class that tops both branches with confidence ≥ τ wins for every α.
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let n = rng.random_range(2..=6);
        let c = rng.random_range(0..n);
        let lift = |rng: &mut rand_chacha::ChaCha8Rng| {
            let mut p = rand_simplex(rng, n);
            p.iter_mut().for_each(|v| *v *= 0.4);
            p[c] += 0.6;
            p
        };
        let (g, k) = (lift(&mut rng), lift(&mut rng));
        let tau = rng.random_range(0.0..0.6);
        for step in 0..=10 {
            let alpha = step as f64 / 10.0;
            let p = fuse(&g, &k, alpha).unwrap();
            if route(&p, 0.0, &FusionConfig::new(alpha, tau)) != Decision::Seen(c) {
                worst = 1.0;
            }
        }
    }
    reports.push(SymmetryReport { name: "shared-argmax routing under fusion", cases, max_err: worst, tol: 0.0 });
    reports
}

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

fn copy_bundle(src: &Path, dst: &Path) {
    fs::create_dir_all(dst).unwrap();
    for f in [EMBEDDINGS_FILE, LABELS_FILE, MANIFEST_FILE] {
        fs::copy(src.join(f), dst.join(f)).unwrap();
    }
}

fn corrupt_bundle(tmp: &Path, name: &str, file: &str, edit: impl FnOnce(&mut Vec<u8>)) -> srctrace::Result<srctrace::EmbeddingBundle> {
    let dir = tmp.join(name);
    copy_bundle(&fixtures_dir().join("tiny_bundle"), &dir);
    let mut bytes = fs::read(dir.join(file)).unwrap();
    edit(&mut bytes);
    fs::write(dir.join(file), bytes).unwrap();
    read_bundle(&dir)
}

/// Golden round-trips and corrupt-file error classes; returns each failed check.
pub fn format_conformance() -> Vec<String> {
    let mut failures = Vec::new();
    let mut check = |ok: bool, what: &str| {
        if !ok {
            failures.push(what.to_string());
        }
    };
    let fx = fixtures_dir();
    let tmp = tempfile::tempdir().unwrap();

    let bundle = read_bundle(fx.join("tiny_bundle")).unwrap();
    check(bundle.dim == 3 && bundle.count() == 4, "golden bundle header");
    check(bundle.row(3) == [-2.0, 0.125, 4.0], "golden bundle row 3");
    check(bundle.label_ids == [0, 1, -1, 1], "golden bundle labels");
    check(bundle.split("test").unwrap() == [2, 3], "golden bundle split");
    let out = tmp.path().join("rewritten");
    write_bundle(&bundle, &out).unwrap();
    for f in [EMBEDDINGS_FILE, LABELS_FILE, MANIFEST_FILE] {
        check(
            fs::read(out.join(f)).unwrap() == fs::read(fx.join("tiny_bundle").join(f)).unwrap(),
            &format!("bundle {f} round-trips byte for byte"),
        );
    }
    let emb = fs::read(fx.join("tiny_bundle").join(EMBEDDINGS_FILE)).unwrap();
    check(emb[..12] == *b"SGE1\x03\0\0\0\x04\0\0\0", "SGE1 header bytes");
    check(emb[12..16] == 0.5f32.to_le_bytes(), "SGE1 first value");

    let sgm_path = fx.join("tiny.sgm");
    let sgm = fs::read(&sgm_path).unwrap();
    let cp = decode_checkpoint(&sgm, &sgm_path).unwrap();
    check(cp.config.kind == ModelKind::Fcn && cp.config.classes == 2, "golden checkpoint config");
    check(
        cp.tensor("w").map(|t| (t.dims().to_vec(), t.data().to_vec()))
            == Some((vec![2, 2], vec![1.0, -2.0, 0.25, 3.5])),
        "golden checkpoint tensor w",
    );
    check(encode_checkpoint(&cp).unwrap() == sgm, "SGM1 round-trips byte for byte");

    let r = corrupt_bundle(tmp.path(), "magic_e", EMBEDDINGS_FILE, |b| b[0] = b'X');
    check(matches!(r, Err(Error::BadMagic { .. })), "embeddings bad magic → BadMagic");
    let r = corrupt_bundle(tmp.path(), "magic_l", LABELS_FILE, |b| b[3] = b'2');
    check(matches!(r, Err(Error::BadMagic { .. })), "labels bad magic → BadMagic");
    let r = corrupt_bundle(tmp.path(), "trunc_e", EMBEDDINGS_FILE, |b| b.truncate(b.len() - 2));
    check(
        matches!(r, Err(Error::Truncated { expected: 60, actual: 58, .. })),
        "embeddings truncated → Truncated(60, 58)",
    );
    let r = corrupt_bundle(tmp.path(), "long_e", EMBEDDINGS_FILE, |b| b.push(0));
    check(matches!(r, Err(Error::Truncated { .. })), "embeddings oversized → Truncated");
    let r = corrupt_bundle(tmp.path(), "trunc_l", LABELS_FILE, |b| b.truncate(10));
    check(matches!(r, Err(Error::Truncated { .. })), "labels truncated → Truncated");
    let r = corrupt_bundle(tmp.path(), "count", LABELS_FILE, |b| b[4] = 3);
    check(matches!(r, Err(Error::Inconsistent(_))), "label count mismatch → Inconsistent");
    let r = corrupt_bundle(tmp.path(), "label_id", LABELS_FILE, |b| b[8] = 7);
    check(matches!(r, Err(Error::Inconsistent(_))), "label id out of range → Inconsistent");
    let r = corrupt_bundle(tmp.path(), "nan", EMBEDDINGS_FILE, |b| b[12..16].copy_from_slice(&f32::NAN.to_le_bytes()));
    check(matches!(r, Err(Error::Inconsistent(_))), "non-finite value → Inconsistent");
    let r = corrupt_bundle(tmp.path(), "version", MANIFEST_FILE, |b| {
        *b = String::from_utf8(b.clone()).unwrap().replace("\"version\": 1", "\"version\": 2").into_bytes()
    });
    check(matches!(r, Err(Error::UnsupportedVersion { found: 2, .. })), "manifest version 2 → UnsupportedVersion");
    let r = corrupt_bundle(tmp.path(), "dangling", MANIFEST_FILE, |b| {
        *b = String::from_utf8(b.clone()).unwrap().replace("      3\n", "      9\n").into_bytes()
    });
    check(matches!(r, Err(Error::Inconsistent(_))), "dangling split index → Inconsistent");
    check(
        matches!(read_bundle(tmp.path().join("missing")), Err(Error::Io { .. })),
        "missing bundle → Io",
    );

    let mut bad = sgm.clone();
    bad[0] = b'X';
    check(matches!(decode_checkpoint(&bad, &sgm_path), Err(Error::BadMagic { .. })), "checkpoint bad magic → BadMagic");
    let mut bad = sgm.clone();
    bad[4] = 2;
    check(
        matches!(decode_checkpoint(&bad, &sgm_path), Err(Error::UnsupportedVersion { found: 2, .. })),
        "checkpoint version 2 → UnsupportedVersion",
    );
    check(
        matches!(decode_checkpoint(&sgm[..sgm.len() - 5], &sgm_path), Err(Error::Truncated { .. })),
        "checkpoint truncated → Truncated",
    );
    let mut bad = sgm.clone();
    bad.push(0);
    check(matches!(decode_checkpoint(&bad, &sgm_path), Err(Error::Truncated { .. })), "checkpoint trailing byte → Truncated");
    // Rename tensor "b" to "w".
    let mut bad = sgm.clone();
    let second_name = 4 + 4 + 4 + (2 + 1 + 1 + 8 + 4 * 8) + 2;
    assert_eq!(bad[second_name], b'b');
    bad[second_name] = b'w';
    check(
        matches!(decode_checkpoint(&bad, &sgm_path), Err(Error::DuplicateTensor(ref n)) if n == "w"),
        "duplicate tensor name → DuplicateTensor",
    );
    failures
}
