//! Subcommands of the `srctrace` binary.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 runtime (I/O) failure.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use crate::bundle::{read_bundle, write_bundle, TEST, UNLABELED};
use crate::checkpoint::CHECKPOINT_FILE;
use crate::encoder::BaselineVariant;
use crate::error::{Error, Result};
use crate::fusion::FusionConfig;
use crate::metrics::{pca_project, sweep_tau, tau_grid, Protocol};
use crate::nn::Tensor;
use crate::pipeline::{evaluate_split, predict_split, LoadedModel};
use crate::synth::{generate_synthetic, SynthConfig};
use crate::train::{train, train_baseline, TrainConfig};
use crate::LATENT_DIM;

pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Parser)]
#[command(name = "srctrace", version, about = "Source attribution and unseen-generator detection over utterance embeddings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded Gaussian-cluster bundle.
    Synth(SynthArgs),
    /// Train a model on a bundle's train split, early-stopping on dev.
    Train(TrainArgs),
    /// Score a split and write a metrics report.
    Eval(EvalArgs),
    /// Write one JSON line of predictions per bundle record.
    Predict(PredictArgs),
    /// Re-route a split over a grid of confidence thresholds.
    Sweep(SweepArgs),
    /// Project a split's latents onto two principal components.
    Project(ProjectArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 6)]
    pub classes: usize,
    #[arg(long, default_value_t = 200)]
    pub per_class: usize,
    #[arg(long, default_value_t = 512)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.3)]
    pub std: f64,
    #[arg(long, default_value_t = 5.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Arch {
    Signal,
    Fcn,
    Cnn,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Comma-separated label ids; every bundle label when omitted.
    #[arg(long, value_delimiter = ',')]
    pub seen: Option<Vec<i32>>,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub eps: f64,
    #[arg(long, value_enum, default_value_t = Arch::Signal)]
    pub arch: Arch,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Branch {
    Gnn,
    Knn,
    Ensemble,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    Closed,
    Open,
}

/// Fusion overrides; unset values come from the checkpoint.
#[derive(Debug, Args)]
pub struct FusionArgs {
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Also route to unseen when the GNN entropy exceeds `--tau-e`.
    #[arg(long)]
    pub entropy_routing: bool,
    /// Entropy threshold in nats; defaults to ln(N)/2.
    #[arg(long, requires = "entropy_routing")]
    pub tau_e: Option<f64>,
}

impl FusionArgs {
    fn resolve(&self, model: &LoadedModel) -> Result<FusionConfig> {
        let mut cfg = model.default_fusion();
        if let Some(t) = self.tau {
            cfg.tau = t;
        }
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        if self.entropy_routing {
            cfg = cfg.with_default_entropy_routing(model.config().classes);
            if let Some(t) = self.tau_e {
                cfg.tau_e = t;
            }
        }
        cfg.validate().map_err(|e| Error::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = TEST)]
    pub split: String,
    #[command(flatten)]
    pub fusion: FusionArgs,
    /// `gnn` forces α = 1, `knn` forces α = 0.
    #[arg(long, value_enum, default_value_t = Branch::Ensemble)]
    pub branch: Branch,
    #[arg(long, value_enum, default_value_t = ProtocolArg::Closed)]
    pub protocol: ProtocolArg,
    /// Metrics JSON; stdout when omitted.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Confusion matrix CSV.
    #[arg(long)]
    pub confusion: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[command(flatten)]
    pub fusion: FusionArgs,
    /// JSON-lines output; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = TEST)]
    pub split: String,
    #[arg(long, default_value_t = 0.1)]
    pub tau_min: f64,
    #[arg(long, default_value_t = 0.9)]
    pub tau_max: f64,
    #[arg(long, default_value_t = 9)]
    pub steps: usize,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Full sweep with per-threshold reports as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = TEST)]
    pub split: String,
    /// Seed of the power-iteration start vectors.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Usage(_) => 1,
        Error::Io { .. } => 3,
        _ => 2,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Project(a) => cmd_project(&a),
    }
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            fs::write(p, text).map_err(|e| Error::io(p, e))
        }
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn json_text<T: serde::Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        classes: a.classes,
        per_class: a.per_class,
        dim: a.dim,
        cluster_std: a.std,
        mean_radius: a.radius,
        seed: a.seed,
    };
    cfg.validate().map_err(|e| Error::Usage(e.to_string()))?;
    let bundle = generate_synthetic(&cfg)?;
    write_bundle(&bundle, &a.out)?;
    info!("wrote {} records to {}", bundle.count(), a.out.display());
    Ok(())
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let cfg = TrainConfig {
        lr: a.lr,
        batch_size: a.batch,
        max_epochs: a.epochs,
        patience: a.patience,
        seed: a.seed,
        seen_class_ids: a.seen.clone(),
        heads: a.heads,
        k: a.k,
        eps: a.eps,
        ..TrainConfig::default()
    };
    cfg.validate().map_err(|e| Error::Usage(e.to_string()))?;
    let bundle = read_bundle(&a.bundle)?;
    let (model, report) = match a.arch {
        Arch::Signal => {
            let (model, knn, report) = train(&bundle, &cfg)?;
            (LoadedModel::Signal { model, knn }, report)
        }
        Arch::Fcn | Arch::Cnn => {
            let variant = if a.arch == Arch::Fcn {
                BaselineVariant::Fcn
            } else {
                BaselineVariant::Cnn
            };
            let (model, report) = train_baseline(&bundle, &cfg, variant)?;
            (LoadedModel::Baseline(model), report)
        }
    };
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    model.save(a.out.join(CHECKPOINT_FILE))?;
    emit(Some(&a.out.join(REPORT_FILE)), &json_text(&report)?)?;
    info!("checkpoint written to {}", a.out.display());
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let model = LoadedModel::load(&a.model)?;
    let mut fusion = a.fusion.resolve(&model)?;
    match a.branch {
        Branch::Gnn => fusion.alpha = 1.0,
        Branch::Knn => fusion.alpha = 0.0,
        Branch::Ensemble => {}
    }
    if a.branch != Branch::Ensemble && a.fusion.alpha.is_some() {
        warn!("--branch {:?} overrides --alpha", a.branch);
    }
    let bundle = read_bundle(&a.bundle)?;
    let protocol = match a.protocol {
        ProtocolArg::Closed => Protocol::Closed,
        ProtocolArg::Open => Protocol::Open,
    };
    let report = evaluate_split(&model, &bundle, &a.split, &fusion, protocol)?;
    emit(a.report.as_deref(), &json_text(&report)?)?;
    if let Some(path) = &a.confusion {
        emit(Some(path), &report.confusion_csv(&model.config().class_names))?;
    }
    Ok(())
}

pub fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let model = LoadedModel::load(&a.model)?;
    let fusion = a.fusion.resolve(&model)?;
    let bundle = read_bundle(&a.embeddings)?;
    model.check_dim(&bundle)?;
    let names = &model.config().class_names;
    let mut out = String::new();
    for i in 0..bundle.count() {
        let p = model.predict(&bundle.row_f64(i), &fusion)?;
        out.push_str(&serde_json::to_string(&p.record(names))?);
        out.push('\n');
    }
    emit(a.out.as_deref(), &out)
}

pub fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let grid = tau_grid(a.tau_min, a.tau_max, a.steps)?;
    let model = LoadedModel::load(&a.model)?;
    let mut base = model.default_fusion();
    if let Some(alpha) = a.alpha {
        base.alpha = alpha;
        base.validate().map_err(|e| Error::Usage(e.to_string()))?;
    }
    let bundle = read_bundle(&a.bundle)?;
    let preds = predict_split(&model, &bundle, &a.split, &base, false)?;
    let result = sweep_tau(&preds.predictions, &preds.truths, &base, &grid)?;
    emit(a.out.as_deref(), &result.to_csv())?;
    if let Some(path) = &a.json {
        emit(Some(path), &json_text(&result)?)?;
    }
    Ok(())
}

pub fn cmd_project(a: &ProjectArgs) -> Result<()> {
    let model = LoadedModel::load(&a.model)?;
    let LoadedModel::Signal { model, .. } = &model else {
        return Err(Error::InvalidInput(
            "project needs a signal checkpoint; baselines have no latent space".into(),
        ));
    };
    let bundle = read_bundle(&a.bundle)?;
    if bundle.dim != model.config.input_dim {
        return Err(Error::Shape(format!(
            "bundle dim {} does not match checkpoint input dim {}",
            bundle.dim, model.config.input_dim
        )));
    }
    let records = bundle.split(&a.split)?;
    if records.is_empty() {
        return Err(Error::InvalidInput(format!("split {:?} is empty", a.split)));
    }
    let mut latents = Vec::with_capacity(records.len() * LATENT_DIM);
    for &i in records {
        latents.extend(model.encode(&bundle.row_f64(i))?);
    }
    let latents = Tensor::matrix(records.len(), LATENT_DIM, latents)?;
    let projection = pca_project(&latents, a.seed)?;
    let mut out = String::from("x,y,label\n");
    for (row, &i) in records.iter().enumerate() {
        let id = bundle.label_ids[i];
        let label = if id == UNLABELED {
            ""
        } else {
            bundle.label_name(id).unwrap_or("")
        };
        let xy = projection.coords.row(row);
        out.push_str(&format!("{},{},{}\n", xy[0], xy[1], label));
    }
    emit(a.out.as_deref(), &out)
}
