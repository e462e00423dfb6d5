//! Save a trained model with its KNN index and restore it bit for bit.

use srctrace::checkpoint::{encode_checkpoint, CHECKPOINT_FILE};
use srctrace::{generate_synthetic, load_checkpoint, train, LoadedModel, SynthConfig, TrainConfig};

fn main() -> srctrace::Result<()> {
    let bundle = generate_synthetic(&SynthConfig {
        classes: 3,
        per_class: 30,
        dim: 12,
        cluster_std: 0.3,
        mean_radius: 5.0,
        seed: 9,
    })?;
    let config = TrainConfig {
        max_epochs: 3,
        ..TrainConfig::default()
    };
    let (model, knn, _) = train(&bundle, &config)?;
    let z0 = bundle.row_f64(0);
    let saved = LoadedModel::Signal { model, knn };

    let dir = tempfile::tempdir().expect("tempdir");
    saved.save(dir.path().join(CHECKPOINT_FILE))?;
    let cp = load_checkpoint(dir.path().join(CHECKPOINT_FILE))?;
    for (name, t) in &cp.tensors {
        println!("{name:<20} {:?}", t.dims());
    }
    let bytes = encode_checkpoint(&cp)?;
    println!("{} bytes, config {}", bytes.len(), serde_json::to_string(&cp.config).expect("json"));

    let restored = LoadedModel::load(dir.path())?;
    let fusion = saved.default_fusion();
    assert_eq!(saved.predict(&z0, &fusion)?, restored.predict(&z0, &fusion)?);
    println!("restored model predicts identically");
    Ok(())
}
