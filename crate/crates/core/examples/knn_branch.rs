//! Inverse-square-distance KNN vote on its own.

use srctrace::nn::Tensor;
use srctrace::KnnIndex;

fn main() -> srctrace::Result<()> {
    let latents = Tensor::matrix(
        6,
        2,
        vec![0.0, 0.0, 0.1, 0.0, 0.0, 0.1, 5.0, 5.0, 5.1, 5.0, 5.0, 5.1],
    )?;
    let index = KnnIndex::fit(latents, vec![0, 0, 0, 1, 1, 1], 2, 3, 1e-8)?;
    for z in [[0.05, 0.05], [2.5, 2.5], [4.0, 4.0]] {
        let p = index.predict(&z)?;
        let neighbors = index.neighbors(&z)?;
        println!("{z:?}: p_knn {p:.4?} via {neighbors:.3?}");
    }
    // An exact hit dominates the vote through the 1/(d² + ε) weight.
    println!("exact hit: {:?}", index.predict(&[5.0, 5.0])?);
    Ok(())
}
