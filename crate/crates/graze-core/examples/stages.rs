//! Scratch per-stage timing: where does one frame's forward time go?

use graze_core::dataset::{cloud_filter_set, compute_channel_stats, prepare_sample, SynthConfig};
use graze_core::model::{forward, prepare_for_model, ModelConfig, ModelParams};
use graze_core::numerics::{conv2d_forward, conv2d_param_grads, maxpool2d, relu, Tensor};
use std::time::Instant;

fn time_ms<F: FnMut()>(reps: usize, mut f: F) -> f64 {
    let t0 = Instant::now();
    for _ in 0..reps {
        f();
    }
    t0.elapsed().as_secs_f64() * 1e3 / reps as f64
}

fn main() {
    let config = ModelConfig::main();
    let params = ModelParams::init(&config, 1).unwrap();
    let synth = SynthConfig {
        n_samples: 3,
        cadence_days: 10,
        ..SynthConfig::default()
    };
    let raw = graze_core::dataset::synth_generate(&synth, 7).unwrap();
    let kept = cloud_filter_set(raw);
    let stats = compute_channel_stats(&kept).unwrap();
    let prepared = prepare_sample(&kept[0], &stats, true).unwrap().unwrap();
    let frames = prepare_for_model(&prepared, &config).unwrap();
    let frame = &frames[0];
    let in_poly = prepared.polygon_mask.iter().filter(|&&m| m == 1).count();
    println!("in-polygon pixels: {in_poly}, frames: {}", frames.len());

    let reps = 200;
    let conv = conv2d_forward(frame, &params.conv_kernels, &params.conv_bias).unwrap();
    println!(
        "conv2d_forward:      {:.3} ms",
        time_ms(reps, || {
            let _ = conv2d_forward(frame, &params.conv_kernels, &params.conv_bias).unwrap();
        })
    );
    let activated = relu(&conv);
    println!(
        "relu:                {:.3} ms",
        time_ms(reps, || {
            let _ = relu(&conv);
        })
    );
    println!(
        "maxpool2d:           {:.3} ms",
        time_ms(reps, || {
            let _ = maxpool2d(&activated, 3, 3).unwrap();
        })
    );
    let mut upstream = Tensor::zeros(&[45, 45, 8]);
    for (i, v) in upstream.data_mut().iter_mut().enumerate() {
        if i % 9 == 0 {
            *v = 0.01;
        }
    }
    println!(
        "conv2d_param_grads:  {:.3} ms",
        time_ms(reps, || {
            let _ = conv2d_param_grads(frame, &params.conv_kernels, &upstream).unwrap();
        })
    );
    println!(
        "full forward/frame:  {:.3} ms",
        time_ms(50, || {
            let _ = forward(std::slice::from_ref(frame), &params, &config).unwrap();
        })
    );
    // A dense frame for comparison (no masking => no zero-skip).
    let dense = Tensor::filled(&[45, 45, 13], 0.3);
    println!(
        "conv fwd dense:      {:.3} ms",
        time_ms(20, || {
            let _ = conv2d_forward(&dense, &params.conv_kernels, &params.conv_bias).unwrap();
        })
    );
}
