//! `graze train` — cluster-respecting split, normalization from the training
//! side only, ensemble training, checkpoint + sidecar.

use crate::sidecar::{self, MemberSummary, TrainSidecar};
use clap::Args;
use graze_core::dataset::{
    cloud_filter_set, compute_channel_stats, load_manifest, load_sample, prepare_sample,
    split_train_val,
};
use graze_core::model::{configure_ablation, save_checkpoint};
use graze_core::parallel::resolve_threads;
use graze_core::training::{train_ensemble, TrainConfig};
use graze_core::{Error, Result};
use std::collections::HashSet;
use std::fs;
use std::path::PathBuf;

#[derive(Args)]
pub struct TrainArgs {
    /// Dataset directory produced by gen-data
    #[arg(long)]
    pub data: PathBuf,

    /// Checkpoint output path
    #[arg(long)]
    pub out: PathBuf,

    /// Base seed: member i trains with seed + i
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Input ablation (see `graze train --help` for names)
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

    /// Ensemble size
    #[arg(long, default_value_t = 10)]
    pub members: usize,

    /// Fraction of sites held out for validation
    #[arg(long, default_value_t = 0.2)]
    pub val_fraction: f64,

    /// Worker threads (GRAZE_THREADS overrides)
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

pub fn run(args: TrainArgs) -> Result<()> {
    if !(0.0..1.0).contains(&args.val_fraction) || args.val_fraction == 0.0 {
        return Err(Error::InvalidConfig(format!(
            "--val-fraction {} outside (0,1)",
            args.val_fraction
        )));
    }
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
    let pairs: Vec<(u32, u32)> = manifest.samples.iter().map(|e| (e.site_id, e.cluster)).collect();
    let (train_ids, val_ids) = split_train_val(&pairs, 1.0 - args.val_fraction, args.seed)?;

    let train_set: HashSet<u32> = train_ids.iter().copied().collect();
    let train_raw: Vec<_> = samples.iter().filter(|s| train_set.contains(&s.site_id)).cloned().collect();

    // Normalization statistics come from the filtered training side only;
    // the validation side must not leak into them.
    let stats = compute_channel_stats(&cloud_filter_set(train_raw.clone()))?;
    let prepared = prepare_set(&train_raw, &stats, model_config.input_mode.masks())?;

    eprintln!(
        "training {} members on {} samples ({} held out) with {} thread(s)",
        train_config.member_count,
        prepared.len(),
        val_ids.len(),
        threads
    );
    let (ensemble, logs) = train_ensemble(&prepared, &model_config, &train_config, threads)?;

    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    save_checkpoint(&ensemble, &args.out)?;

    let record = TrainSidecar {
        command: "train".into(),
        data_dir: args.data.display().to_string(),
        seed: args.seed,
        ablation: args.ablation.clone(),
        model_config,
        train_config,
        val_fraction: args.val_fraction,
        train_sites: train_ids,
        val_sites: val_ids,
        channel_stats: stats,
        members: logs.iter().map(MemberSummary::from_log).collect(),
    };
    sidecar::write_sidecar(&args.out, &record)?;

    for summary in &record.members {
        println!(
            "member {}: final loss {:.6}, train accuracy {:.4}",
            summary.seed, summary.final_loss, summary.final_accuracy
        );
    }
    println!("checkpoint {}", args.out.display());
    Ok(())
}
