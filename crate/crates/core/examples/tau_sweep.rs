//! Re-route one set of predictions over a threshold grid.

use srctrace::bundle::TEST;
use srctrace::metrics::{sweep_tau, tau_grid};
use srctrace::{generate_synthetic, predict_split, train, LoadedModel, SynthConfig, TrainConfig};

fn main() -> srctrace::Result<()> {
    let bundle = generate_synthetic(&SynthConfig {
        classes: 5,
        per_class: 50,
        dim: 24,
        cluster_std: 0.5,
        mean_radius: 3.0,
        seed: 5,
    })?;
    let config = TrainConfig {
        seen_class_ids: Some(vec![0, 1, 2]),
        max_epochs: 15,
        ..TrainConfig::default()
    };
    let (model, knn, _) = train(&bundle, &config)?;
    let model = LoadedModel::Signal { model, knn };

    let base = model.default_fusion();
    let split = predict_split(&model, &bundle, TEST, &base, false)?;
    let result = sweep_tau(&split.predictions, &split.truths, &base, &tau_grid(0.1, 0.9, 9)?)?;
    print!("{}", result.to_csv());
    for p in &result.points {
        println!("tau {:.1}: {} routed to unseen", p.tau, p.unseen_count);
    }
    if let Some(best) = result.best_open() {
        println!("lowest open error at tau {}", result.points[best].tau);
    }
    Ok(())
}
