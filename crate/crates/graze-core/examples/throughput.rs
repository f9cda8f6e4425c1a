//! Scratch throughput probe: per-sample forward/backward cost on realistic
//! synthetic data, and 10-member ensemble inference latency on a T=30 series.

use graze_core::dataset::{
    cloud_filter_set, compute_channel_stats, prepare_sample, SynthConfig,
};
use graze_core::model::{
    backward, forward, predict_ensemble, prepare_for_model, EnsembleParams, ModelConfig,
    ModelParams,
};
use graze_core::numerics::bce_grad_logit;
use std::time::Instant;

fn main() {
    let config = ModelConfig::main();
    let params = ModelParams::init(&config, 1).unwrap();

    // Training-shaped data: cadence 10 like the calibrated pipeline.
    let synth = SynthConfig {
        n_samples: 12,
        cadence_days: 10,
        ..SynthConfig::default()
    };
    let raw = graze_core::dataset::synth_generate(&synth, 7).unwrap();
    let kept = cloud_filter_set(raw);
    let stats = compute_channel_stats(&kept).unwrap();
    let prepared: Vec<_> = kept
        .iter()
        .filter_map(|s| prepare_sample(s, &stats, true).unwrap())
        .collect();
    let model_frames: Vec<_> = prepared
        .iter()
        .map(|p| prepare_for_model(p, &config).unwrap())
        .collect();

    let ts: Vec<usize> = model_frames.iter().map(|f| f.len()).collect();
    let in_poly: Vec<usize> = prepared
        .iter()
        .map(|p| p.polygon_mask.iter().filter(|&&m| m == 1).count())
        .collect();
    println!("samples: {}", model_frames.len());
    println!("frames per sample: {ts:?}");
    println!("in-polygon pixels: {in_poly:?}");

    // Forward only.
    let t0 = Instant::now();
    let mut traces = Vec::new();
    for frames in &model_frames {
        traces.push(forward(frames, &params, &config).unwrap());
    }
    let fwd_total = t0.elapsed();
    println!(
        "forward: {:?} total, {:.2} ms/sample",
        fwd_total,
        fwd_total.as_secs_f64() * 1e3 / model_frames.len() as f64
    );

    // Forward + final-step backward (the training step shape).
    let t0 = Instant::now();
    for (frames, p) in model_frames.iter().zip(&prepared) {
        let trace = forward(frames, &params, &config).unwrap();
        let mut d_logits = vec![0.0; frames.len()];
        *d_logits.last_mut().unwrap() =
            bce_grad_logit(*trace.probs.last().unwrap(), p.label.target());
        let _ = backward(frames, &params, &config, &trace, &d_logits).unwrap();
    }
    let both_total = t0.elapsed();
    println!(
        "forward+backward: {:?} total, {:.2} ms/sample",
        both_total,
        both_total.as_secs_f64() * 1e3 / model_frames.len() as f64
    );

    // Inference latency: 10 members, one T~30 series.
    let dense = SynthConfig {
        n_samples: 2,
        cadence_days: 7,
        cadence_jitter: 1,
        cloud_prob: 0.0,
        ..SynthConfig::default()
    };
    let raw = graze_core::dataset::synth_generate(&dense, 9).unwrap();
    let kept = cloud_filter_set(raw);
    let stats = compute_channel_stats(&kept).unwrap();
    let p30 = prepare_sample(&kept[0], &stats, true).unwrap().unwrap();
    let frames30 = prepare_for_model(&p30, &config).unwrap();
    println!("inference series length: {}", frames30.len());
    let ensemble = EnsembleParams::init(&config, 10, 5).unwrap();
    // Warm up, then best-of-5.
    let _ = predict_ensemble(&frames30, &ensemble).unwrap();
    let mut best = f64::MAX;
    for _ in 0..5 {
        let t0 = Instant::now();
        let _ = predict_ensemble(&frames30, &ensemble).unwrap();
        best = best.min(t0.elapsed().as_secs_f64());
    }
    println!("10-member ensemble inference: {:.2} ms (best of 5)", best * 1e3);
}
