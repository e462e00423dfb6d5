//! Fully-connected and convolutional comparison classifiers.

use srctrace::bundle::TEST;
use srctrace::metrics::Protocol;
use srctrace::{
    evaluate_split, generate_synthetic, train_baseline, BaselineVariant, LoadedModel, SynthConfig, TrainConfig,
};

fn main() -> srctrace::Result<()> {
    let bundle = generate_synthetic(&SynthConfig {
        classes: 4,
        per_class: 100,
        dim: 16,
        cluster_std: 0.3,
        mean_radius: 5.0,
        seed: 2,
    })?;
    for variant in [BaselineVariant::Fcn, BaselineVariant::Cnn] {
        let (model, report) = train_baseline(&bundle, &TrainConfig::default(), variant)?;
        let model = LoadedModel::Baseline(model);
        let closed = evaluate_split(&model, &bundle, TEST, &model.default_fusion(), Protocol::Closed)?;
        println!(
            "{variant:?}: {} epochs, closed acc {:.3}, f1 {:.3}",
            report.epochs.len(),
            closed.accuracy,
            closed.f1_macro
        );
    }
    Ok(())
}
