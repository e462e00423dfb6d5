//! Train encoder + prototype graph on a small bundle and watch early stopping.

use srctrace::{generate_synthetic, train, SynthConfig, TrainConfig};

fn main() -> srctrace::Result<()> {
    let bundle = generate_synthetic(&SynthConfig {
        classes: 4,
        per_class: 150,
        dim: 32,
        cluster_std: 0.3,
        mean_radius: 5.0,
        seed: 0,
    })?;
    let config = TrainConfig {
        max_epochs: 30,
        patience: 10,
        ..TrainConfig::default()
    };
    let (model, knn, report) = train(&bundle, &config)?;
    for e in &report.epochs {
        println!("epoch {:>2}  loss {:.4}  dev acc {:.3}", e.epoch, e.train_loss, e.dev_accuracy);
    }
    println!(
        "best epoch {} (stopped early: {}), {} parameters, knn over {} latents",
        report.best_epoch,
        report.stopped_early,
        model.params.scalar_count(),
        knn.labels().len()
    );
    Ok(())
}
