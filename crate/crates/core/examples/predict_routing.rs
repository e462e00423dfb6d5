//! Per-sample outputs and how the confidence and entropy rules route them.

use srctrace::bundle::TEST;
use srctrace::fusion::FusionConfig;
use srctrace::{generate_synthetic, train, LoadedModel, SynthConfig, TrainConfig};

fn main() -> srctrace::Result<()> {
    let bundle = generate_synthetic(&SynthConfig {
        classes: 3,
        per_class: 150,
        dim: 16,
        cluster_std: 0.3,
        mean_radius: 5.0,
        seed: 11,
    })?;
    let config = TrainConfig {
        seen_class_ids: Some(vec![0, 1]),
        patience: 10,
        ..TrainConfig::default()
    };
    let (model, knn, _) = train(&bundle, &config)?;
    let model = LoadedModel::Signal { model, knn };
    let names = model.config().class_names.clone();

    let by_conf = FusionConfig::new(0.5, 0.9);
    let by_entropy = by_conf.with_default_entropy_routing(names.len());
    for &i in bundle.split(TEST)?.iter().step_by(10) {
        let p = model.predict(&bundle.row_f64(i), &by_conf)?;
        let truth = bundle.label_name(bundle.label_ids[i]).unwrap_or("?");
        println!(
            "{truth}: max_conf {:.3} H {:.3} -> {:?} / with entropy rule {:?}",
            p.max_conf,
            p.entropy,
            p.decision,
            p.rerouted(&by_entropy).decision
        );
    }
    let p = model.predict(&bundle.row_f64(0), &by_conf)?;
    println!("{}", serde_json::to_string(&p.record(&names)).expect("serializable"));
    Ok(())
}
