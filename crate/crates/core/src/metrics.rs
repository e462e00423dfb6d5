//! Accuracy, macro-F1, equal error rate, the threshold sweep and a 2-D PCA
//! projection of latents.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{Decision, FusionConfig, Prediction};
use crate::model::argmax;
use crate::nn::{dot, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Seen-class truths only; decisions are the fused argmax.
    Closed,
    /// Seen and unseen truths; the routed decision is scored over `N + 1` classes.
    Open,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truth {
    Seen(usize),
    Unseen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub protocol: Protocol,
    pub count: usize,
    pub accuracy: f64,
    pub f1_macro: f64,
    pub eer: f64,
    /// `confusion[truth][predicted]`; under the open protocol the last row
    /// and column stand for "unseen".
    pub confusion: Vec<Vec<u64>>,
}

impl MetricsReport {
    pub fn confusion_csv(&self, class_names: &[String]) -> String {
        let mut names: Vec<String> = class_names.to_vec();
        if self.protocol == Protocol::Open {
            names.push("unseen".into());
        }
        let mut out = String::from("truth");
        for n in &names {
            let _ = write!(out, ",{n}");
        }
        out.push('\n');
        for (row, name) in self.confusion.iter().zip(&names) {
            out.push_str(name);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Equal error rate of a binary scoring, positives scoring high.
///
/// Operating points are taken at every distinct score `t` (accept when
/// `score ≥ t`) plus one point above every score. The EER is read where
/// FAR and FRR meet, interpolating linearly between the last point with
/// `FRR < FAR` and the first with `FRR ≥ FAR`.
pub fn compute_eer(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidInput(
            "EER needs both positive and negative samples".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // The lowest threshold accepts everything: FAR = 1, FRR = 0.
    let (mut far, mut frr) = (1.0f64, 0.0f64);
    let (mut rejected_pos, mut rejected_neg) = (0usize, 0usize);
    let mut i = 0;
    // Terminates: past the top score FRR = 1 ≥ FAR = 0.
    loop {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                rejected_pos += 1;
            } else {
                rejected_neg += 1;
            }
            i += 1;
        }
        let next_far = (n_neg - rejected_neg) as f64 / n_neg as f64;
        let next_frr = rejected_pos as f64 / n_pos as f64;
        if next_frr >= next_far {
            return Ok(interpolate(far, frr, next_far, next_frr));
        }
        far = next_far;
        frr = next_frr;
    }
}

/// Crossing of FAR and FRR on the segment between two operating points,
/// given `frr0 < far0` and `frr1 ≥ far1`.
fn interpolate(far0: f64, frr0: f64, far1: f64, frr1: f64) -> f64 {
    let d0 = far0 - frr0;
    let d1 = far1 - frr1;
    if d1 == 0.0 {
        return far1;
    }
    let t = d0 / (d0 - d1);
    far0 + t * (far1 - far0)
}

/// Accuracy and macro-F1 of a square confusion matrix. Classes that never
/// occur as truth or prediction are left out of the F1 average.
pub fn scores_from_confusion(confusion: &[Vec<u64>]) -> (f64, f64) {
    let n = confusion.len();
    let total: u64 = confusion.iter().flatten().sum();
    let trace: u64 = (0..n).map(|i| confusion[i][i]).sum();
    let mut f1_sum = 0.0;
    let mut f1_count = 0usize;
    for c in 0..n {
        let tp = confusion[c][c];
        let fn_: u64 = confusion[c].iter().sum::<u64>() - tp;
        let fp: u64 = (0..n).map(|r| confusion[r][c]).sum::<u64>() - tp;
        let denom = 2 * tp + fp + fn_;
        if denom > 0 {
            f1_sum += 2.0 * tp as f64 / denom as f64;
            f1_count += 1;
        }
    }
    let accuracy = if total == 0 { 0.0 } else { trace as f64 / total as f64 };
    let f1 = if f1_count == 0 { 0.0 } else { f1_sum / f1_count as f64 };
    (accuracy, f1)
}

fn class_count(predictions: &[Prediction]) -> Result<usize> {
    let n = predictions
        .first()
        .map(|p| p.p_ens.len())
        .ok_or_else(|| Error::InvalidInput("no predictions to evaluate".into()))?;
    if predictions.iter().any(|p| p.p_ens.len() != n) {
        return Err(Error::Shape("predictions disagree on class count".into()));
    }
    Ok(n)
}

/// Macro one-vs-rest EER with `p_ens[c]` as the class-`c` score; classes
/// without both positives and negatives are skipped.
pub fn macro_eer(predictions: &[Prediction], truths: &[usize]) -> Result<f64> {
    let n = class_count(predictions)?;
    let mut sum = 0.0;
    let mut used = 0usize;
    for c in 0..n {
        let labels: Vec<bool> = truths.iter().map(|&t| t == c).collect();
        let pos = labels.iter().filter(|&&l| l).count();
        if pos == 0 || pos == labels.len() {
            continue;
        }
        let scores: Vec<f64> = predictions.iter().map(|p| p.p_ens[c]).collect();
        sum += compute_eer(&scores, &labels)?;
        used += 1;
    }
    if used == 0 {
        return Err(Error::InvalidInput(
            "closed-set EER needs at least two classes among the truths".into(),
        ));
    }
    Ok(sum / used as f64)
}

pub fn evaluate_closed(predictions: &[Prediction], truths: &[usize]) -> Result<MetricsReport> {
    let n = class_count(predictions)?;
    if truths.len() != predictions.len() {
        return Err(Error::Shape(format!(
            "{} predictions but {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    if let Some(bad) = truths.iter().find(|&&t| t >= n) {
        return Err(Error::InvalidInput(format!("truth class {bad} outside 0..{n}")));
    }
    let mut confusion = vec![vec![0u64; n]; n];
    for (p, &t) in predictions.iter().zip(truths) {
        confusion[t][argmax(&p.p_ens)] += 1;
    }
    let (accuracy, f1_macro) = scores_from_confusion(&confusion);
    Ok(MetricsReport {
        protocol: Protocol::Closed,
        count: predictions.len(),
        accuracy,
        f1_macro,
        eer: macro_eer(predictions, truths)?,
        confusion,
    })
}

fn open_confusion(predictions: &[Prediction], truths: &[Truth]) -> Result<Vec<Vec<u64>>> {
    let n = class_count(predictions)?;
    if truths.len() != predictions.len() {
        return Err(Error::Shape(format!(
            "{} predictions but {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    let slot = |c: usize| -> Result<usize> {
        if c < n {
            Ok(c)
        } else {
            Err(Error::InvalidInput(format!("class {c} outside 0..{n}")))
        }
    };
    let mut confusion = vec![vec![0u64; n + 1]; n + 1];
    for (p, t) in predictions.iter().zip(truths) {
        let row = match *t {
            Truth::Seen(c) => slot(c)?,
            Truth::Unseen => n,
        };
        let col = match p.decision {
            Decision::Seen(c) => slot(c)?,
            Decision::Unseen => n,
        };
        confusion[row][col] += 1;
    }
    Ok(confusion)
}

/// Accuracy of the routed decisions over `N + 1` classes.
pub fn open_set_accuracy(predictions: &[Prediction], truths: &[Truth]) -> Result<f64> {
    Ok(scores_from_confusion(&open_confusion(predictions, truths)?).0)
}

/// Seen-vs-unseen EER with `max_conf` as the seen score.
pub fn open_set_eer(predictions: &[Prediction], truths: &[Truth]) -> Result<f64> {
    if !truths.contains(&Truth::Unseen) {
        return Err(Error::InvalidInput(
            "open-set EER is undefined without unseen samples".into(),
        ));
    }
    if !truths.iter().any(|t| matches!(t, Truth::Seen(_))) {
        return Err(Error::InvalidInput(
            "open-set EER is undefined without seen samples".into(),
        ));
    }
    let scores: Vec<f64> = predictions.iter().map(|p| p.max_conf).collect();
    let labels: Vec<bool> = truths.iter().map(|t| matches!(t, Truth::Seen(_))).collect();
    compute_eer(&scores, &labels)
}

pub fn evaluate_open(predictions: &[Prediction], truths: &[Truth]) -> Result<MetricsReport> {
    let confusion = open_confusion(predictions, truths)?;
    let eer = open_set_eer(predictions, truths)?;
    let (accuracy, f1_macro) = scores_from_confusion(&confusion);
    Ok(MetricsReport {
        protocol: Protocol::Open,
        count: predictions.len(),
        accuracy,
        f1_macro,
        eer,
        confusion,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub tau: f64,
    /// Mean of FAR and FRR over seen-class samples, one-vs-rest per class,
    /// at the routed decisions.
    pub eer_closed: f64,
    /// Mean of FAR and FRR of the routed seen-vs-unseen decision.
    pub eer_open: f64,
    pub unseen_count: usize,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau,eer_closed,eer_open\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", p.tau, p.eer_closed, p.eer_open);
        }
        out
    }

    /// Index of the first point with minimal `eer_open`.
    pub fn best_open(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, p) in self.points.iter().enumerate() {
            if best.is_none_or(|b| p.eer_open < self.points[b].eer_open) {
                best = Some(i);
            }
        }
        best
    }
}

/// Evenly spaced inclusive grid; a single step yields `[min]`. Values are
/// rounded to 12 decimals so 0.1-step grids print as written.
pub fn tau_grid(min: f64, max: f64, steps: usize) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(Error::Usage("tau grid needs at least one step".into()));
    }
    if !(min < max) {
        return Err(Error::Usage(format!("tau-min {min} must be below tau-max {max}")));
    }
    if steps == 1 {
        return Ok(vec![min]);
    }
    let last = (steps - 1) as f64;
    Ok((0..steps)
        .map(|i| {
            let t = (min * (last - i as f64) + max * i as f64) / last;
            (t * 1e12).round() / 1e12
        })
        .collect())
}

fn routed_operating_errors(predictions: &[Prediction], truths: &[Truth]) -> (f64, f64) {
    let n = predictions[0].p_ens.len();
    let (mut seen, mut unseen, mut seen_rejected, mut unseen_accepted) = (0usize, 0usize, 0usize, 0usize);
    let mut class_total = vec![0usize; n];
    let mut class_missed = vec![0usize; n];
    let mut class_false = vec![0usize; n];
    for (p, t) in predictions.iter().zip(truths) {
        match (*t, p.decision) {
            (Truth::Seen(c), d) => {
                seen += 1;
                class_total[c] += 1;
                match d {
                    Decision::Unseen => {
                        seen_rejected += 1;
                        class_missed[c] += 1;
                    }
                    Decision::Seen(k) if k != c => {
                        class_missed[c] += 1;
                        class_false[k] += 1;
                    }
                    Decision::Seen(_) => {}
                }
            }
            (Truth::Unseen, Decision::Seen(_)) => {
                unseen += 1;
                unseen_accepted += 1;
            }
            (Truth::Unseen, Decision::Unseen) => unseen += 1,
        }
    }
    let open = 0.5 * (seen_rejected as f64 / seen as f64 + unseen_accepted as f64 / unseen as f64);
    let mut closed_sum = 0.0;
    let mut used = 0usize;
    for c in 0..n {
        let negatives = seen - class_total[c];
        if class_total[c] == 0 || negatives == 0 {
            continue;
        }
        let frr = class_missed[c] as f64 / class_total[c] as f64;
        let far = class_false[c] as f64 / negatives as f64;
        closed_sum += 0.5 * (far + frr);
        used += 1;
    }
    let closed = if used == 0 { f64::NAN } else { closed_sum / used as f64 };
    (closed, open)
}

/// Re-routes the stored fused distributions at every threshold of `grid`.
pub fn sweep_tau(
    predictions: &[Prediction],
    truths: &[Truth],
    base: &FusionConfig,
    grid: &[f64],
) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("tau grid is empty".into()));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidInput("tau grid must be strictly increasing".into()));
    }
    let mut points = Vec::with_capacity(grid.len());
    for &tau in grid {
        let cfg = FusionConfig { tau, ..*base };
        let routed: Vec<Prediction> = predictions.iter().map(|p| p.rerouted(&cfg)).collect();
        let report = evaluate_open(&routed, truths)?;
        let (eer_closed, eer_open) = routed_operating_errors(&routed, truths);
        let unseen_count = routed
            .iter()
            .filter(|p| p.decision == Decision::Unseen)
            .count();
        points.push(SweepPoint {
            tau,
            eer_closed,
            eer_open,
            unseen_count,
            report,
        });
    }
    Ok(SweepResult { points })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// `[M × 2]` coordinates.
    pub coords: Tensor,
    /// `[2 × d]` unit principal directions.
    pub components: Tensor,
    /// Sample variance (divisor `M − 1`) along each component.
    pub variances: [f64; 2],
}

pub const PCA_TOLERANCE: f64 = 1e-9;
const PCA_MAX_ITERS: usize = 200_000;

/// Mean-centered projection onto the top two principal directions, found by
/// power iteration with deflation from a seeded start vector.
pub fn pca_project(latents: &Tensor, seed: u64) -> Result<Projection> {
    if latents.rank() != 2 || latents.rows() < 2 || latents.cols() == 0 {
        return Err(Error::InvalidInput(format!(
            "pca needs an [M × d] matrix with M ≥ 2, got {:?}",
            latents.dims()
        )));
    }
    let (m, d) = (latents.rows(), latents.cols());
    let mut mean = vec![0.0; d];
    for i in 0..m {
        for (acc, v) in mean.iter_mut().zip(latents.row(i)) {
            *acc += v / m as f64;
        }
    }
    let centered: Vec<Vec<f64>> = (0..m)
        .map(|i| latents.row(i).iter().zip(&mean).map(|(v, mu)| v - mu).collect())
        .collect();
    let mut cov = vec![vec![0.0; d]; d];
    for row in &centered {
        for a in 0..d {
            if row[a] == 0.0 {
                continue;
            }
            for b in 0..d {
                cov[a][b] += row[a] * row[b];
            }
        }
    }
    for r in &mut cov {
        for v in r.iter_mut() {
            *v /= (m - 1) as f64;
        }
    }
    let trace: f64 = (0..d).map(|i| cov[i][i]).sum();
    if trace <= 0.0 {
        return Err(Error::InvalidInput(
            "pca input is degenerate: all points are identical".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut components: Vec<Vec<f64>> = Vec::with_capacity(2);
    let mut variances = [0.0; 2];
    for slot in 0..2 {
        let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        orthonormalize(&mut v, &components);
        let mut lambda = 0.0;
        for _ in 0..PCA_MAX_ITERS {
            let mut next: Vec<f64> = cov.iter().map(|r| dot(r, &v)).collect();
            let raw = next.iter().map(|x| x * x).sum::<f64>().sqrt();
            if raw <= trace * 1e-12 || !raw.is_finite() {
                // Remaining spectrum is round-off; keep the orthonormal start.
                lambda = 0.0;
                break;
            }
            orthonormalize(&mut next, &components);
            let delta = next
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            v = next;
            lambda = rayleigh(&cov, &v);
            if delta < PCA_TOLERANCE {
                break;
            }
        }
        // Deflate.
        for a in 0..d {
            for b in 0..d {
                cov[a][b] -= lambda * v[a] * v[b];
            }
        }
        variances[slot] = lambda;
        components.push(v);
    }

    let mut coords = Vec::with_capacity(m * 2);
    for row in &centered {
        coords.push(dot(row, &components[0]));
        coords.push(dot(row, &components[1]));
    }
    // Report the variances realized by the projection.
    for (slot, var) in variances.iter_mut().enumerate() {
        *var = coords.iter().skip(slot).step_by(2).map(|x| x * x).sum::<f64>() / (m - 1) as f64;
    }
    Ok(Projection {
        coords: Tensor::matrix(m, 2, coords)?,
        components: Tensor::matrix(2, d, components.concat())?,
        variances,
    })
}

fn rayleigh(cov: &[Vec<f64>], v: &[f64]) -> f64 {
    cov.iter().zip(v).map(|(r, vi)| vi * dot(r, v)).sum()
}

/// Removes the projections on `basis` and rescales to unit length (left
/// unnormalized when the remainder vanishes).
fn orthonormalize(v: &mut [f64], basis: &[Vec<f64>]) {
    // Two Gram-Schmidt passes keep orthogonality under heavy cancellation.
    for _ in 0..2 {
        for b in basis {
            let c = dot(v, b);
            for (x, bi) in v.iter_mut().zip(b) {
                *x -= c * bi;
            }
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}
