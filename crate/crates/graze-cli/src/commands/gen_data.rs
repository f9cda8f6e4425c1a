//! `graze gen-data` — write a synthetic labeled dataset directory.

use crate::sidecar;
use clap::Args;
use graze_core::dataset::{generate_to_dir, Label, SynthConfig};
use graze_core::{Error, Result};
use serde::Serialize;
use std::fs;
use std::path::PathBuf;

#[derive(Args)]
pub struct GenDataArgs {
    /// Output dataset directory (created if missing)
    #[arg(long)]
    pub out: PathBuf,

    /// Number of sites to generate
    #[arg(long, default_value_t = 407)]
    pub n: usize,

    /// Fraction of sites labeled grazing
    #[arg(long, default_value_t = 0.62)]
    pub balance: f64,

    /// Generator difficulty: 0 = trivially separable, 1 = hardest
    #[arg(long, default_value_t = 0.5)]
    pub difficulty: f64,

    /// Probability a frame carries cloud blobs
    #[arg(long, default_value_t = 0.15)]
    pub cloud_prob: f64,

    /// Mean days between acquisitions
    #[arg(long, default_value_t = 5)]
    pub cadence_days: u16,

    /// Master seed for the generator
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Serialize)]
struct GenDataSidecar {
    command: String,
    seed: u64,
    config: SynthConfig,
}

pub fn run(args: GenDataArgs) -> Result<()> {
    if args.n == 0 {
        return Err(Error::InvalidConfig("--n must be positive".into()));
    }
    let config = SynthConfig {
        n_samples: args.n,
        grazing_fraction: args.balance,
        difficulty: args.difficulty,
        cloud_prob: args.cloud_prob,
        cadence_days: args.cadence_days,
        ..SynthConfig::default()
    };

    fs::create_dir_all(&args.out)?;
    let manifest = generate_to_dir(&config, args.seed, &args.out)?;

    let record = GenDataSidecar { command: "gen-data".into(), seed: args.seed, config };
    sidecar::write_json(&args.out.join("run.json"), &record)?;

    let grazing = manifest.samples.iter().filter(|s| s.label == Label::Grazing).count();
    println!(
        "wrote {} samples ({} grazing, {} no-grazing) to {}",
        manifest.samples.len(),
        grazing,
        manifest.samples.len() - grazing,
        args.out.display()
    );
    Ok(())
}
