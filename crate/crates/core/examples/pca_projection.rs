//! Two-component projection of latents, e.g. for a scatter plot.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use srctrace::metrics::pca_project;
use srctrace::nn::Tensor;

fn main() -> srctrace::Result<()> {
    // Anisotropic cloud: the axis scales are the expected variances' roots.
    let scales = [4.0, 2.0, 0.5, 0.1];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let n = Normal::new(0.0, 1.0).expect("valid normal");
    let rows = 500;
    let data: Vec<f64> = (0..rows)
        .flat_map(|_| scales.map(|s| s * n.sample(&mut rng)))
        .collect();
    let p = pca_project(&Tensor::matrix(rows, scales.len(), data)?, 0)?;
    println!("variances {:.3?} (expected near 16 and 4)", p.variances);
    println!("first component  {:.3?}", p.components.row(0));
    println!("second component {:.3?}", p.components.row(1));
    println!("first point at {:.3?}", p.coords.row(0));
    Ok(())
}
