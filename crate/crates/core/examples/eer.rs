//! Equal error rate of a score list, with the interpolated crossing.

use srctrace::metrics::compute_eer;

fn main() -> srctrace::Result<()> {
    let separable = compute_eer(&[0.9, 0.8, 0.3, 0.1], &[true, true, false, false])?;
    let inverted = compute_eer(&[0.1, 0.2, 0.8, 0.9], &[true, true, false, false])?;
    let overlap = compute_eer(
        &[0.95, 0.7, 0.6, 0.55, 0.5, 0.4, 0.3, 0.2],
        &[true, true, false, true, false, true, false, false],
    )?;
    println!("separable {separable}, inverted {inverted}, overlapping {overlap:.4}");
    assert!(compute_eer(&[0.5, 0.4], &[true, true]).is_err());
    Ok(())
}
