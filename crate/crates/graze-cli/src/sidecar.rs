//! Deterministic JSON artifacts. Every command that writes a file also
//! writes `<file>.run.json` beside it with the fully resolved inputs, so an
//! artifact can always be traced back to the exact flags that produced it.
//! Nothing here records wall-clock time: rerunning a command with the same
//! flags must reproduce every byte.

use graze_core::dataset::ChannelStats;
use graze_core::evaluation::MetricsReport;
use graze_core::model::ModelConfig;
use graze_core::training::{TrainConfig, TrainLog};
use graze_core::Result;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

/// `<artifact>.run.json`, next to the artifact it describes.
pub fn sidecar_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".run.json");
    artifact.with_file_name(name)
}

/// Serializes `payload` as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, payload: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(payload)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Writes the sidecar for `artifact` and returns its path.
pub fn write_sidecar<T: Serialize>(artifact: &Path, payload: &T) -> Result<PathBuf> {
    let path = sidecar_path(artifact);
    write_json(&path, payload)?;
    Ok(path)
}

/// Per-member training summary kept in the train sidecar. Holds final-epoch
/// numbers only; the full loss curves stay in memory.
#[derive(Debug, Serialize, Deserialize)]
pub struct MemberSummary {
    pub seed: u64,
    pub epochs: usize,
    pub final_loss: f64,
    pub final_accuracy: f64,
    pub train_metrics: Option<MetricsReport>,
}

impl MemberSummary {
    pub fn from_log(log: &TrainLog) -> Self {
        let last = log.epochs.last();
        Self {
            seed: log.member_seed,
            epochs: log.epochs.len(),
            final_loss: last.map(|e| e.mean_loss).unwrap_or(f64::NAN),
            final_accuracy: last.map(|e| e.accuracy).unwrap_or(f64::NAN),
            train_metrics: log.final_train_metrics,
        }
    }
}

/// Sidecar written by `graze train`. The checkpoint itself stores only the
/// model configuration and weights, so evaluation reads the split membership
/// and normalization statistics from here.
#[derive(Debug, Serialize, Deserialize)]
pub struct TrainSidecar {
    pub command: String,
    pub data_dir: String,
    pub seed: u64,
    pub ablation: String,
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub val_fraction: f64,
    pub train_sites: Vec<u32>,
    pub val_sites: Vec<u32>,
    pub channel_stats: ChannelStats,
    pub members: Vec<MemberSummary>,
}

/// Loads the train sidecar that belongs to a checkpoint.
pub fn read_train_sidecar(ckpt: &Path) -> Result<TrainSidecar> {
    let path = sidecar_path(ckpt);
    let text = fs::read_to_string(&path).map_err(|e| {
        graze_core::Error::Format(format!(
            "missing training sidecar {} ({e}); it records the split and normalization statistics",
            path.display()
        ))
    })?;
    Ok(serde_json::from_str(&text)?)
}
