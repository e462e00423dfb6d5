//! Source attribution of synthetic speech with unseen-generator rejection,
//! working on precomputed utterance embeddings.
//!
//! An embedding `z0` is compressed by a small 1-D CNN to a 64-d latent `z`.
//! Two branches score the seen classes: a prototype graph whose nodes are
//! conditioned on `z` and mixed by multi-head self-attention, and a
//! distance-weighted K-nearest-neighbour vote over training latents. Their
//! distributions are blended convexly and low-confidence samples are routed
//! to "unseen".
//!
//! ```no_run
//! use srctrace::{generate_synthetic, train, SynthConfig, TrainConfig};
//!
//! let bundle = generate_synthetic(&SynthConfig {
//!     classes: 4, per_class: 50, dim: 64, cluster_std: 0.3, mean_radius: 5.0, seed: 1,
//! })?;
//! let (model, knn, report) = train(&bundle, &TrainConfig::default())?;
//! # Ok::<(), srctrace::Error>(())
//! ```

pub mod bundle;
pub mod checkpoint;
pub mod cli;
pub mod encoder;
pub mod error;
pub mod fusion;
pub mod gnn;
pub mod knn;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod synth;
pub mod train;

pub use bundle::{read_bundle, write_bundle, EmbeddingBundle};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, ModelConfig, ModelKind};
pub use encoder::{BaselineVariant, Encoder, LATENT_DIM};
pub use error::{Error, Result};
pub use fusion::{fuse, predict, route, Decision, FusionConfig, Prediction};
pub use gnn::{attention_entropy, GnnHead, GnnOutput};
pub use knn::KnnIndex;
pub use metrics::{
    compute_eer, evaluate_closed, evaluate_open, pca_project, sweep_tau, tau_grid, MetricsReport,
    Projection, Protocol, SweepResult, Truth,
};
pub use model::{BaselineModel, Classifier, SignalModel};
pub use pipeline::{evaluate_split, predict_split, LoadedModel};
pub use synth::{generate_synthetic, SynthConfig};
pub use train::{train, train_baseline, TrainConfig, TrainReport};
