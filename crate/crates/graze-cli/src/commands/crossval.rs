//! `graze crossval` — repeated independent cluster-respecting splits, each
//! training a fresh ensemble, reported as per-split rows plus mean/median.

use crate::sidecar;
use clap::Args;
use graze_core::dataset::load_dataset;
use graze_core::model::configure_ablation;
use graze_core::parallel::resolve_threads;
use graze_core::training::{cross_validate, TrainConfig};
use graze_core::Result;
use serde::Serialize;
use std::fs;
use std::path::PathBuf;

#[derive(Args)]
pub struct CrossvalArgs {
    /// Dataset directory produced by gen-data
    #[arg(long)]
    pub data: PathBuf,

    /// Number of independent splits
    #[arg(long, default_value_t = 5)]
    pub folds: usize,

    /// Base seed for splits, member seeds, and augmentation
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Input ablation
    #[arg(long, default_value = "main")]
    pub ablation: String,

    /// Training epochs per member
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,

    /// Samples per optimizer step
    #[arg(long, default_value_t = 10)]
    pub batch_size: usize,

    /// Adam learning rate
    #[arg(long, default_value_t = 3e-4)]
    pub lr: f64,

    /// Ensemble size per fold
    #[arg(long, default_value_t = 10)]
    pub members: usize,

    /// CSV output path
    #[arg(long, default_value = "crossval.csv")]
    pub out: PathBuf,

    /// Worker threads (GRAZE_THREADS overrides)
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Serialize)]
struct CrossvalSidecar {
    command: String,
    data_dir: String,
    folds: usize,
    seed: u64,
    ablation: String,
    train_config: TrainConfig,
    threads: usize,
}

pub fn run(args: CrossvalArgs) -> Result<()> {
    let model_config = configure_ablation(&args.ablation)?;
    let train_config = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.lr,
        member_count: args.members,
        base_seed: args.seed,
        ..TrainConfig::default()
    };
    train_config.validate()?;
    let threads = resolve_threads(Some(args.threads));

    let (manifest, samples) = load_dataset(&args.data).map_err(|e| super::with_path(e, &args.data))?;
    let clusters: Vec<u32> = manifest.samples.iter().map(|e| e.cluster).collect();

    let report = cross_validate(&samples, &clusters, args.folds, &model_config, &train_config, threads)?;
    let csv = report.to_csv();
    fs::write(&args.out, &csv)?;
    sidecar::write_sidecar(
        &args.out,
        &CrossvalSidecar {
            command: "crossval".into(),
            data_dir: args.data.display().to_string(),
            folds: args.folds,
            seed: args.seed,
            ablation: args.ablation,
            train_config,
            threads,
        },
    )?;
    print!("{csv}");
    Ok(())
}
