//! Generate a seeded cluster bundle, write it to disk and read it back.

use srctrace::bundle::{TEST, TRAIN};
use srctrace::{generate_synthetic, read_bundle, write_bundle, SynthConfig};

fn main() -> srctrace::Result<()> {
    let config = SynthConfig {
        classes: 3,
        per_class: 10,
        dim: 8,
        cluster_std: 0.3,
        mean_radius: 5.0,
        seed: 7,
    };
    let bundle = generate_synthetic(&config)?;
    let dir = tempfile::tempdir().expect("tempdir");
    write_bundle(&bundle, dir.path())?;

    let back = read_bundle(dir.path())?;
    assert_eq!(back, bundle);
    println!("{} records of dim {}, labels {:?}", back.count(), back.dim, back.label_names);
    println!("train {:?}", back.split(TRAIN)?);
    println!("test  {:?}", back.split(TEST)?);
    for f in ["embeddings.bin", "labels.bin", "manifest.json"] {
        let len = std::fs::metadata(dir.path().join(f)).expect("written").len();
        println!("{f}: {len} bytes");
    }
    Ok(())
}
