//! Member and ensemble training, plus the cross-validation harness.
//!
//! Supervision uses the final-step probability only; the last-four vote is a
//! deployment-time aggregation. Each member's run is deterministic per
//! (data, config, seed): shuffling and augmentation draw from streams keyed
//! by (seed, epoch, sample index), so results do not depend on scheduling or
//! thread count.

use crate::dataset::{
    cloud_filter_set, compute_channel_stats, prepare_sample, split_train_val, ChannelStats, Label,
    PreparedSample, SampleTimeSeries,
};
use crate::error::{Error, Result};
use crate::evaluation::{aggregate, confusion, metrics, render_csv, MetricsReport};
use crate::model::{
    backward, forward, param_shapes, predict_ensemble, predict_single, prepare_for_model,
    EnsembleParams, ModelConfig, ModelGrads, ModelParams, PARAM_NAMES,
};
use crate::numerics::{bce_from_logit, bce_grad_logit, AdamHyper, AdamState};
use crate::parallel::{build_pool, par_map};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::training::augment::{augment_crop, augment_flip, temporal_dropout, TemporalDropoutConfig};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Applied independently per axis.
    pub flip_prob: f64,
    pub crop_enabled: bool,
    pub temporal_dropout: TemporalDropoutConfig,
    pub member_count: usize,
    pub base_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 10,
            learning_rate: 3e-4,
            flip_prob: 0.5,
            crop_enabled: true,
            temporal_dropout: TemporalDropoutConfig::default(),
            member_count: 10,
            base_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 || self.member_count == 0 {
            return Err(Error::InvalidConfig("batch size and member count must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate {} invalid", self.learning_rate)));
        }
        for (name, p) in [
            ("flip_prob", self.flip_prob),
            ("series_prob", self.temporal_dropout.series_prob),
            ("step_prob", self.temporal_dropout.step_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("{name} {p} outside [0,1]")));
            }
        }
        if self.temporal_dropout.min_keep == 0 {
            return Err(Error::InvalidConfig("min_keep must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub mean_loss: f64,
    pub accuracy: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub member_seed: u64,
    pub epochs: Vec<EpochStats>,
    /// Metrics on the unaugmented training set; absent when it holds a
    /// single class.
    pub final_train_metrics: Option<MetricsReport>,
}

/// Flip → crop → temporal dropout, all drawing from one stream in a fixed
/// order.
pub fn augment_sample(
    sample: &PreparedSample,
    config: &TrainConfig,
    rng: &mut impl Rng,
) -> PreparedSample {
    let mut out = augment_flip(sample, config.flip_prob, rng);
    if config.crop_enabled {
        out = augment_crop(&out, rng);
    }
    temporal_dropout(&out, &config.temporal_dropout, rng)
}

/// Trains one member from scratch. Batches are processed sample-by-sample
/// (variable-length series never share tensors) and the mean of the batch's
/// per-sample gradients feeds one Adam step.
pub fn train_member(
    samples: &[PreparedSample],
    model_config: &ModelConfig,
    config: &TrainConfig,
    seed: u64,
) -> Result<(ModelParams, TrainLog)> {
    model_config.validate()?;
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidConfig("training needs at least one sample".into()));
    }

    let mut params = ModelParams::init(model_config, seed)?;
    let shapes = param_shapes(model_config);
    let shape_refs: Vec<&[usize]> = shapes.iter().map(|s| s.as_slice()).collect();
    let mut adam = AdamState::new(&shape_refs, AdamHyper::with_learning_rate(config.learning_rate));

    let mut log = TrainLog { member_seed: seed, epochs: Vec::with_capacity(config.epochs), final_train_metrics: None };

    for epoch in 0..config.epochs {
        let start = Instant::now();
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut stream_rng(seed, Stream::Shuffle, &[epoch as u64]));

        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let mut batch_grads = ModelGrads::zeros(model_config);
            let scale = 1.0 / chunk.len() as f64;
            for &idx in chunk {
                let sample = &samples[idx];
                let mut rng = stream_rng(seed, Stream::Augment, &[epoch as u64, idx as u64]);
                let augmented = augment_sample(sample, config, &mut rng);
                let frames = prepare_for_model(&augmented, model_config)?;
                let trace = forward(&frames, &params, model_config)?;
                let last = trace.logits.len() - 1;
                let target = sample.label.target();
                let (loss, p) = bce_from_logit(trace.logits[last], target);
                if !loss.is_finite() {
                    return Err(Error::NonFinite {
                        context: format!(
                            "training loss for site {} (epoch {epoch}, member seed {seed})",
                            sample.site_id
                        ),
                    });
                }
                loss_sum += loss;
                if (p >= 0.5) == (sample.label == Label::Grazing) {
                    correct += 1;
                }
                let mut d_logits = vec![0.0; trace.logits.len()];
                d_logits[last] = bce_grad_logit(p, target) * scale;
                let grads = backward(&frames, &params, model_config, &trace, &d_logits)?;
                batch_grads.add_assign(&grads)?;
            }
            let grad_tensors = batch_grads.tensors();
            let mut param_tensors = params.tensors_mut();
            adam.step(&mut param_tensors, &grad_tensors, &PARAM_NAMES)?;
        }

        log.epochs.push(EpochStats {
            mean_loss: loss_sum / samples.len() as f64,
            accuracy: correct as f64 / samples.len() as f64,
            seconds: start.elapsed().as_secs_f64(),
        });
    }

    log.final_train_metrics = evaluate_member(&params, model_config, samples)?.into();
    Ok((params, log))
}

/// Metrics of a single member on prepared samples; `None` when the sample
/// set holds only one class (metrics are undefined there).
pub fn evaluate_member(
    params: &ModelParams,
    config: &ModelConfig,
    samples: &[PreparedSample],
) -> Result<Option<MetricsReport>> {
    let mut predictions = Vec::with_capacity(samples.len());
    let mut labels = Vec::with_capacity(samples.len());
    for sample in samples {
        let frames = prepare_for_model(sample, config)?;
        predictions.push(predict_single(&frames, params, config)?);
        labels.push(sample.label);
    }
    let cm = confusion(&predictions, &labels)?;
    if cm.tp_gz + cm.fn_gz == 0 || cm.fp_gz + cm.tn_gz == 0 {
        return Ok(None);
    }
    metrics(&cm).map(Some)
}

/// Majority-vote ensemble metrics on prepared samples.
pub fn evaluate_ensemble(ensemble: &EnsembleParams, samples: &[PreparedSample]) -> Result<MetricsReport> {
    let mut predictions = Vec::with_capacity(samples.len());
    let mut labels = Vec::with_capacity(samples.len());
    for sample in samples {
        let frames = prepare_for_model(sample, &ensemble.config)?;
        predictions.push(predict_ensemble(&frames, ensemble)?);
        labels.push(sample.label);
    }
    metrics(&confusion(&predictions, &labels)?)
}

/// Trains `member_count` members with seeds `base_seed + i` on identical
/// data. Members run on the given worker count; results are identical to a
/// sequential run.
pub fn train_ensemble(
    samples: &[PreparedSample],
    model_config: &ModelConfig,
    config: &TrainConfig,
    threads: usize,
) -> Result<(EnsembleParams, Vec<TrainLog>)> {
    config.validate()?;
    let seeds: Vec<u64> = (0..config.member_count)
        .map(|i| config.base_seed.wrapping_add(i as u64))
        .collect();
    let pool = build_pool(threads);
    let results = par_map(&pool, &seeds, |&seed| train_member(samples, model_config, config, seed));
    let mut members = Vec::with_capacity(seeds.len());
    let mut logs = Vec::with_capacity(seeds.len());
    for result in results {
        let (params, log) = result?;
        members.push(params);
        logs.push(log);
    }
    let ensemble = EnsembleParams { config: model_config.clone(), members };
    ensemble.validate()?;
    Ok((ensemble, logs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossvalReport {
    pub splits: Vec<MetricsReport>,
    pub mean: MetricsReport,
    pub median: MetricsReport,
}

impl CrossvalReport {
    pub fn to_csv(&self) -> String {
        let mut rows: Vec<(String, MetricsReport)> = self
            .splits
            .iter()
            .enumerate()
            .map(|(i, r)| ((i + 1).to_string(), *r))
            .collect();
        rows.push(("mean".into(), self.mean));
        rows.push(("median".into(), self.median));
        render_csv(&rows)
    }
}

/// Prepares every sample that survives the cloud/tiny-polygon rules.
pub fn prepare_set(
    raw: &[SampleTimeSeries],
    stats: &ChannelStats,
    mask: bool,
) -> Result<Vec<PreparedSample>> {
    let mut out = Vec::with_capacity(raw.len());
    for sample in raw {
        if let Some(prepared) = prepare_sample(sample, stats, mask)? {
            out.push(prepared);
        }
    }
    Ok(out)
}

/// `n_folds` independent cluster-respecting 80/20 splits. Each fold computes
/// normalization statistics on its own training side, trains a fresh
/// ensemble (member seeds derived from the fold index), and evaluates on its
/// validation side; the mean and median rows aggregate the per-fold reports.
pub fn cross_validate(
    samples: &[SampleTimeSeries],
    clusters: &[u32],
    n_folds: usize,
    model_config: &ModelConfig,
    config: &TrainConfig,
    threads: usize,
) -> Result<CrossvalReport> {
    if samples.len() != clusters.len() {
        return Err(Error::InvalidConfig("one cluster id per sample required".into()));
    }
    if n_folds == 0 {
        return Err(Error::InvalidConfig("need at least one fold".into()));
    }
    let pairs: Vec<(u32, u32)> = samples.iter().zip(clusters).map(|(s, &c)| (s.site_id, c)).collect();
    let mask = model_config.input_mode.masks();

    let mut reports = Vec::with_capacity(n_folds);
    for fold in 0..n_folds {
        let split_seed = derive_seed(config.base_seed, Stream::Split, &[fold as u64]);
        let (train_ids, val_ids) = split_train_val(&pairs, 0.8, split_seed)?;
        let train_set: std::collections::HashSet<u32> = train_ids.into_iter().collect();
        let val_set: std::collections::HashSet<u32> = val_ids.into_iter().collect();

        let train_raw: Vec<SampleTimeSeries> =
            samples.iter().filter(|s| train_set.contains(&s.site_id)).cloned().collect();
        let val_raw: Vec<SampleTimeSeries> =
            samples.iter().filter(|s| val_set.contains(&s.site_id)).cloned().collect();

        let stats = compute_channel_stats(&cloud_filter_set(train_raw.clone()))?;
        let prepared_train = prepare_set(&train_raw, &stats, mask)?;
        let prepared_val = prepare_set(&val_raw, &stats, mask)?;
        if prepared_train.is_empty() || prepared_val.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "fold {fold} left an empty side after preprocessing"
            )));
        }

        let fold_config = TrainConfig {
            base_seed: derive_seed(config.base_seed, Stream::Init, &[fold as u64]),
            ..config.clone()
        };
        let (ensemble, _logs) = train_ensemble(&prepared_train, model_config, &fold_config, threads)?;
        reports.push(evaluate_ensemble(&ensemble, &prepared_val)?);
    }

    let (mean, median) = aggregate(&reports)?;
    Ok(CrossvalReport { splits: reports, mean, median })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synth_generate, SynthConfig};
    use crate::numerics::Tensor;

    /// Tiny chips with a separable temporal signature: grazing sites lose
    /// their signal in the last frame, no-activity sites keep it.
    fn toy_dataset(n: usize, t: usize) -> Vec<PreparedSample> {
        let (h, w, c) = (9usize, 9usize, 2usize);
        let mut mask = vec![0u8; h * w];
        for y in 2..7 {
            for x in 2..7 {
                mask[y * w + x] = 1;
            }
        }
        (0..n)
            .map(|i| {
                let grazing = i % 2 == 0;
                let frames: Vec<Tensor> = (0..t)
                    .map(|f| {
                        let mut tensor = Tensor::zeros(&[h, w, c]);
                        let level = if grazing && f == t - 1 { -1.0 } else { 1.0 };
                        for px in 0..h * w {
                            if mask[px] == 1 {
                                tensor.data_mut()[px * c] = level;
                                tensor.data_mut()[px * c + 1] = 0.3 * level;
                            }
                        }
                        tensor
                    })
                    .collect();
                PreparedSample {
                    site_id: i as u32,
                    frames,
                    days: (0..t).map(|f| 120 + 10 * f as u16).collect(),
                    polygon_mask: mask.clone(),
                    label: if grazing { Label::Grazing } else { Label::NoActivity },
                }
            })
            .collect()
    }

    fn toy_model_config() -> ModelConfig {
        ModelConfig {
            input_channels: 2,
            conv_filters: 3,
            conv_kernel: 3,
            lstm_hidden: 4,
            band_subset: vec![0, 1],
            height: 9,
            width: 9,
            ..ModelConfig::default()
        }
    }

    fn no_augment(epochs: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs,
            flip_prob: 0.0,
            crop_enabled: false,
            temporal_dropout: TemporalDropoutConfig { series_prob: 0.0, ..Default::default() },
            member_count: 1,
            base_seed: seed,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn separable_toy_dataset_is_learned() {
        let data = toy_dataset(2, 3);
        // Two samples form a single batch, so 300 epochs is 300 Adam steps;
        // a stronger learning rate keeps the budget comfortable. Scoring uses
        // the final step: with T=3 the vote would lean on positions the loss
        // never supervised.
        let config = TrainConfig { learning_rate: 3e-3, ..no_augment(300, 0) };
        let model_config =
            ModelConfig { classifier_mode: crate::model::ClassifierMode::OnlyLast, ..toy_model_config() };
        let (params, log) = train_member(&data, &model_config, &config, 3).unwrap();
        let final_loss = log.epochs.last().unwrap().mean_loss;
        assert!(final_loss < 0.01, "final loss {final_loss}");
        // The last 50 epochs stay comfortably converged.
        let tail = &log.epochs[250..];
        let tail_mean: f64 = tail.iter().map(|e| e.mean_loss).sum::<f64>() / 50.0;
        assert!(tail_mean < 0.1, "tail mean {tail_mean}");
        let report = log.final_train_metrics.unwrap();
        assert_eq!(report.acc, 1.0);
        let _ = params;
    }

    #[test]
    fn first_epoch_loss_near_ln2_on_balanced_data() {
        let data = toy_dataset(10, 3);
        let (_, log) = train_member(&data, &toy_model_config(), &no_augment(1, 0), 11).unwrap();
        let loss = log.epochs[0].mean_loss;
        assert!((loss - std::f64::consts::LN_2).abs() < 0.1, "epoch-1 loss {loss}");
    }

    #[test]
    fn same_seed_is_bit_identical_with_augmentation_on() {
        let data = toy_dataset(6, 5);
        let config = TrainConfig {
            epochs: 3,
            member_count: 1,
            base_seed: 5,
            ..TrainConfig::default()
        };
        let model_config = toy_model_config();
        let (a, log_a) = train_member(&data, &model_config, &config, 21).unwrap();
        let (b, log_b) = train_member(&data, &model_config, &config, 21).unwrap();
        for (ta, tb) in a.tensors().iter().zip(b.tensors().iter()) {
            assert_eq!(ta.data(), tb.data());
        }
        // Wall-clock differs between runs; the learning trajectory must not.
        for (ea, eb) in log_a.epochs.iter().zip(&log_b.epochs) {
            assert_eq!(ea.mean_loss.to_bits(), eb.mean_loss.to_bits());
            assert_eq!(ea.accuracy, eb.accuracy);
        }
        let (c, _) = train_member(&data, &model_config, &config, 22).unwrap();
        assert_ne!(a.tensors()[0].data(), c.tensors()[0].data());
    }

    #[test]
    fn log_has_one_finite_entry_per_epoch() {
        let data = toy_dataset(4, 3);
        let (_, log) = train_member(&data, &toy_model_config(), &no_augment(7, 0), 2).unwrap();
        assert_eq!(log.epochs.len(), 7);
        for e in &log.epochs {
            assert!(e.mean_loss.is_finite());
            assert!((0.0..=1.0).contains(&e.accuracy));
            assert!(e.seconds >= 0.0);
        }
    }

    #[test]
    fn non_finite_input_aborts_with_diagnostics() {
        let mut data = toy_dataset(2, 3);
        data[0].frames[0].data_mut()[40] = f64::INFINITY;
        let err = train_member(&data, &toy_model_config(), &no_augment(2, 0), 1).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }), "{err}");
    }

    #[test]
    fn invalid_configs_rejected() {
        let data = toy_dataset(2, 3);
        let model_config = toy_model_config();
        for config in [
            TrainConfig { epochs: 0, ..TrainConfig::default() },
            TrainConfig { batch_size: 0, ..TrainConfig::default() },
            TrainConfig { flip_prob: 1.5, ..TrainConfig::default() },
            TrainConfig { learning_rate: 0.0, ..TrainConfig::default() },
            TrainConfig {
                temporal_dropout: TemporalDropoutConfig { min_keep: 0, ..Default::default() },
                ..TrainConfig::default()
            },
        ] {
            assert!(train_member(&data, &model_config, &config, 1).is_err());
        }
        assert!(train_member(&[], &model_config, &no_augment(1, 0), 1).is_err());
    }

    #[test]
    fn single_member_ensemble_equals_train_member() {
        let data = toy_dataset(4, 3);
        let config = no_augment(2, 17);
        let model_config = toy_model_config();
        let (ensemble, logs) = train_ensemble(&data, &model_config, &config, 1).unwrap();
        assert_eq!(ensemble.members.len(), 1);
        assert_eq!(logs.len(), 1);
        let (solo, _) = train_member(&data, &model_config, &config, 17).unwrap();
        for (ta, tb) in ensemble.members[0].tensors().iter().zip(solo.tensors().iter()) {
            assert_eq!(ta.data(), tb.data());
        }
    }

    #[test]
    fn ensemble_training_is_thread_count_invariant() {
        let data = toy_dataset(4, 3);
        let config = TrainConfig { member_count: 3, ..no_augment(2, 9) };
        let model_config = toy_model_config();
        let (seq, _) = train_ensemble(&data, &model_config, &config, 1).unwrap();
        let (par, _) = train_ensemble(&data, &model_config, &config, 4).unwrap();
        for (a, b) in seq.members.iter().zip(&par.members) {
            assert_eq!(a.init_seed, b.init_seed);
            for (ta, tb) in a.tensors().iter().zip(b.tensors().iter()) {
                assert_eq!(ta.data(), tb.data());
            }
        }
    }

    #[test]
    fn members_get_distinct_seeds_and_parameters() {
        let data = toy_dataset(4, 3);
        let config = TrainConfig { member_count: 3, ..no_augment(1, 30) };
        let (ensemble, logs) = train_ensemble(&data, &toy_model_config(), &config, 2).unwrap();
        assert_eq!(
            logs.iter().map(|l| l.member_seed).collect::<Vec<_>>(),
            vec![30, 31, 32]
        );
        assert_ne!(
            ensemble.members[0].tensors()[0].data(),
            ensemble.members[1].tensors()[0].data()
        );
    }

    #[test]
    fn crossval_short_run_shapes_and_determinism() {
        let synth = SynthConfig {
            n_samples: 16,
            cadence_days: 12,
            cloud_prob: 0.05,
            ..SynthConfig::default()
        };
        let samples = synth_generate(&synth, 77).unwrap();
        let clusters: Vec<u32> = (0..samples.len()).map(|i| synth.cluster_of(i as u32)).collect();
        let config = TrainConfig { epochs: 1, member_count: 1, base_seed: 4, ..TrainConfig::default() };
        let model_config = ModelConfig::default();

        let report = cross_validate(&samples, &clusters, 2, &model_config, &config, 1).unwrap();
        assert_eq!(report.splits.len(), 2);
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 5, "header + 2 splits + mean + median:\n{csv}");
        assert!(csv.lines().nth(3).unwrap().starts_with("mean,"));
        assert!(csv.lines().nth(4).unwrap().starts_with("median,"));
        for r in &report.splits {
            assert!((0.0..=1.0).contains(&r.acc));
        }

        let again = cross_validate(&samples, &clusters, 2, &model_config, &config, 1).unwrap();
        assert_eq!(report, again);
    }
}
