//! Distance-weighted K-nearest-neighbour vote over frozen training latents.
//!
//! Neighbour weights are `1 / (‖z − z_k‖² + ε)`; the class distribution is
//! the weight-normalized sum of the neighbours' one-hot labels. Search is
//! exhaustive, with distance ties resolved toward the lower record index.

use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct KnnIndex {
    latents: Tensor,
    labels: Vec<usize>,
    classes: usize,
    k: usize,
    eps: f64,
}

impl KnnIndex {
    pub fn fit(latents: Tensor, labels: Vec<usize>, classes: usize, k: usize, eps: f64) -> Result<Self> {
        if latents.rank() != 2 {
            return Err(Error::Shape(format!(
                "knn latents must be [M × d], got {:?}",
                latents.dims()
            )));
        }
        let m = latents.rows();
        if m == 0 || latents.cols() == 0 {
            return Err(Error::InvalidInput("knn index needs at least one latent".into()));
        }
        if labels.len() != m {
            return Err(Error::Shape(format!("{m} latents but {} labels", labels.len())));
        }
        if k == 0 || k > m {
            return Err(Error::InvalidConfig(format!("K must be in 1..={m}, got {k}")));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidConfig(format!("ε must be positive, got {eps}")));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::InvalidInput(format!(
                "label {bad} outside 0..{classes}"
            )));
        }
        if !latents.is_finite() {
            return Err(Error::InvalidInput("knn latents contain NaN/Inf".into()));
        }
        Ok(Self {
            latents,
            labels,
            classes,
            k,
            eps,
        })
    }

    pub fn latents(&self) -> &Tensor {
        &self.latents
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn dim(&self) -> usize {
        self.latents.cols()
    }

    /// Indices of the `K` nearest records with their squared distances.
    pub fn neighbors(&self, z: &[f64]) -> Result<Vec<(usize, f64)>> {
        if z.len() != self.dim() {
            return Err(Error::Shape(format!(
                "knn index holds {}-dim latents, query has {}",
                self.dim(),
                z.len()
            )));
        }
        let mut dists: Vec<(usize, f64)> = (0..self.latents.rows())
            .map(|j| {
                let d2 = self
                    .latents
                    .row(j)
                    .iter()
                    .zip(z)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (j, d2)
            })
            .collect();
        dists.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        dists.truncate(self.k);
        Ok(dists)
    }

    pub fn predict(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut p = vec![0.0; self.classes];
        let mut total = 0.0;
        for (j, d2) in self.neighbors(z)? {
            let w = 1.0 / (d2 + self.eps);
            p[self.labels[j]] += w;
            total += w;
        }
        for v in &mut p {
            *v /= total;
        }
        Ok(p)
    }
}
