//! `graze eval` — score a checkpoint on the split recorded at train time.
//!
//! The checkpoint stores configuration and weights; split membership and
//! normalization statistics come from the train sidecar next to it, so
//! evaluation sees exactly the preprocessing the ensemble was trained with.

use crate::sidecar::{self, read_train_sidecar};
use clap::{Args, ValueEnum};
use graze_core::dataset::load_dataset;
use graze_core::evaluation::{confusion, metrics, render_csv, MetricsReport};
use graze_core::model::{load_checkpoint, predict_ensemble, prepare_for_model};
use graze_core::parallel::{build_pool, par_map, resolve_threads};
use graze_core::training::{evaluate_member, prepare_set};
use graze_core::{Error, Result};
use serde::Serialize;
use std::collections::HashSet;
use std::path::PathBuf;

#[derive(Args)]
pub struct EvalArgs {
    /// Trained checkpoint (its .run.json sidecar must sit next to it)
    #[arg(long)]
    pub ckpt: PathBuf,

    /// Dataset directory to evaluate on
    #[arg(long)]
    pub data: PathBuf,

    /// Which side of the recorded split to score
    #[arg(long, value_enum, default_value_t = SplitChoice::Val)]
    pub split: SplitChoice,

    /// JSON report output path
    #[arg(long, default_value = "report.json")]
    pub out: PathBuf,

    /// Optional CSV report (same columns as the JSON)
    #[arg(long)]
    pub csv: Option<PathBuf>,

    /// Worker threads (GRAZE_THREADS overrides)
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitChoice {
    Train,
    Val,
    All,
}

impl SplitChoice {
    fn label(self) -> &'static str {
        match self {
            SplitChoice::Train => "train",
            SplitChoice::Val => "val",
            SplitChoice::All => "all",
        }
    }
}

/// Report written by `graze eval`: ensemble metrics at the top level (same
/// field names as the CSV columns) plus per-member metrics for dispersion.
#[derive(Serialize)]
struct EvalReport {
    #[serde(flatten)]
    ensemble: MetricsReport,
    members: Vec<MetricsReport>,
}

#[derive(Serialize)]
struct EvalSidecar {
    command: String,
    ckpt: String,
    data_dir: String,
    split: SplitChoice,
    samples: usize,
    threads: usize,
}

pub fn run(args: EvalArgs) -> Result<()> {
    let threads = resolve_threads(Some(args.threads));
    let ensemble = load_checkpoint(&args.ckpt).map_err(|e| super::with_path(e, &args.ckpt))?;
    let side = read_train_sidecar(&args.ckpt)?;
    let (_, samples) = load_dataset(&args.data).map_err(|e| super::with_path(e, &args.data))?;

    let wanted: HashSet<u32> = match args.split {
        SplitChoice::Train => side.train_sites.iter().copied().collect(),
        SplitChoice::Val => side.val_sites.iter().copied().collect(),
        SplitChoice::All => side.train_sites.iter().chain(&side.val_sites).copied().collect(),
    };
    let raw: Vec<_> = samples.into_iter().filter(|s| wanted.contains(&s.site_id)).collect();
    let prepared = prepare_set(&raw, &side.channel_stats, ensemble.config.input_mode.masks())?;
    if prepared.is_empty() {
        return Err(Error::Evaluation(format!(
            "no samples from the {} split survive preprocessing",
            args.split.label()
        )));
    }

    let pool = build_pool(threads);
    let predictions = par_map(&pool, &prepared, |sample| {
        let frames = prepare_for_model(sample, &ensemble.config)?;
        predict_ensemble(&frames, &ensemble)
    });
    let predictions: Vec<_> = predictions.into_iter().collect::<Result<_>>()?;
    let labels: Vec<_> = prepared.iter().map(|s| s.label).collect();
    let report = metrics(&confusion(&predictions, &labels)?)?;

    let member_reports = par_map(&pool, &ensemble.members, |member| {
        evaluate_member(member, &ensemble.config, &prepared)
    });
    let mut members = Vec::with_capacity(ensemble.members.len());
    for result in member_reports {
        match result? {
            Some(r) => members.push(r),
            None => eprintln!("note: member metrics skipped (single-class split)"),
        }
    }

    sidecar::write_json(&args.out, &EvalReport { ensemble: report, members })?;
    sidecar::write_sidecar(
        &args.out,
        &EvalSidecar {
            command: "eval".into(),
            ckpt: args.ckpt.display().to_string(),
            data_dir: args.data.display().to_string(),
            split: args.split,
            samples: prepared.len(),
            threads,
        },
    )?;

    let csv = render_csv(&[(args.split.label().to_string(), report)]);
    if let Some(path) = &args.csv {
        std::fs::write(path, &csv)?;
    }
    print!("{csv}");
    Ok(())
}
