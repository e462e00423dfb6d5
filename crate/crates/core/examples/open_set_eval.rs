//! Hold two generators out of training and score the test split under both
//! protocols and all three branches.

use srctrace::bundle::TEST;
use srctrace::fusion::FusionConfig;
use srctrace::metrics::Protocol;
use srctrace::{evaluate_split, generate_synthetic, train, LoadedModel, SynthConfig, TrainConfig};

fn main() -> srctrace::Result<()> {
    let bundle = generate_synthetic(&SynthConfig {
        classes: 6,
        per_class: 60,
        dim: 32,
        cluster_std: 0.3,
        mean_radius: 5.0,
        seed: 3,
    })?;
    let config = TrainConfig {
        seen_class_ids: Some(vec![0, 1, 2, 3]),
        max_epochs: 20,
        ..TrainConfig::default()
    };
    let (model, knn, _) = train(&bundle, &config)?;
    let model = LoadedModel::Signal { model, knn };

    let closed = evaluate_split(&model, &bundle, TEST, &FusionConfig::default(), Protocol::Closed)?;
    println!("closed: acc {:.3} f1 {:.3} eer {:.3}", closed.accuracy, closed.f1_macro, closed.eer);

    for (name, alpha) in [("gnn", 1.0), ("knn", 0.0), ("ensemble", 0.5)] {
        let open = evaluate_split(&model, &bundle, TEST, &FusionConfig::new(alpha, 0.5), Protocol::Open)?;
        println!("open {name:>8}: acc {:.3} eer {:.3}", open.accuracy, open.eer);
    }
    let open = evaluate_split(&model, &bundle, TEST, &FusionConfig::default(), Protocol::Open)?;
    print!("{}", open.confusion_csv(&model.config().class_names));
    Ok(())
}
