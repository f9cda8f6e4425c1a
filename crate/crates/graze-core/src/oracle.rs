//! Finite-difference oracle suite: every backward pass in the crate, plus
//! the fully composed model, checked against central differences on small
//! randomized instances.
//!
//! ReLU and max-pool are piecewise linear, so instances are screened to keep
//! every activation and every pool decision a safe margin away from a kink:
//! a finite-difference step perturbs any conv output by at most
//! `FD_STEP * |x|`, so margins a few times that make the checks exact. The
//! composed-model case additionally conditions the loss with an offset
//! quadratic so no coordinate's gradient sits below the truncation noise of
//! the smooth part; see `check_model`.

use crate::error::{Error, Result};
use crate::model::{backward, forward, ModelConfig, ModelParams, PARAM_NAMES};
use crate::numerics::{
    bce_from_logit, bce_grad_logit, bilstm_backward, bilstm_forward, conv2d_backward,
    conv2d_forward, grad_check, linear_backward, linear_forward, lstm_backward, lstm_forward,
    maxpool2d, maxpool2d_backward, relu, relu_backward, sigmoid, sigmoid_grad, LstmParams, Tensor,
};
use crate::rng::{stream_rng, Stream};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

/// Acceptance bar for every case.
pub const ORACLE_TOLERANCE: f64 = 1e-4;

/// Margin keeping piecewise-linear decisions stable under FD perturbation.
const KINK_MARGIN: f64 = 4e-3;

#[derive(Debug, Clone, Serialize)]
pub struct OracleCase {
    pub name: String,
    pub max_rel_err: f64,
}

/// Runs every case for `n_seeds` seeds and reports the worst relative error
/// per case.
pub fn run_suite(n_seeds: u64) -> Result<Vec<OracleCase>> {
    if n_seeds == 0 {
        return Err(Error::InvalidConfig("oracle needs at least one seed".into()));
    }
    let mut merged: Vec<OracleCase> = Vec::new();
    for seed in 0..n_seeds {
        let cases = check_seed(seed)?;
        if merged.is_empty() {
            merged = cases
                .into_iter()
                .map(|(name, max_rel_err)| OracleCase { name, max_rel_err })
                .collect();
        } else {
            for (slot, (name, err)) in merged.iter_mut().zip(cases) {
                debug_assert_eq!(slot.name, name);
                slot.max_rel_err = slot.max_rel_err.max(err);
            }
        }
    }
    Ok(merged)
}

pub fn suite_passes(cases: &[OracleCase], tolerance: f64) -> bool {
    cases.iter().all(|c| c.max_rel_err < tolerance)
}

fn check_seed(seed: u64) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::new();
    check_conv(seed, &mut out)?;
    check_relu(seed, &mut out);
    check_maxpool(seed, &mut out)?;
    check_linear(seed, &mut out)?;
    check_losses(seed, &mut out);
    check_lstm(seed, &mut out)?;
    check_bilstm(seed, &mut out)?;
    check_model(seed, &mut out)?;
    Ok(out)
}

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn weighted_sum(out: &Tensor, w: &Tensor) -> f64 {
    dotv(out.data(), w.data())
}

/// Distinct values on a lattice (pairwise gaps ≥ 2/n), shifted so none sits
/// near zero; safe for both ReLU kinks and pool ties.
fn lattice(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product::<usize>();
    let mut slots: Vec<usize> = (0..n).collect();
    slots.shuffle(rng);
    let data = slots
        .into_iter()
        .map(|i| -1.0 + 2.0 * i as f64 / n as f64 + 0.005)
        .collect();
    Tensor::new(shape.to_vec(), data).expect("lattice shape")
}

fn check_conv(seed: u64, out: &mut Vec<(String, f64)>) -> Result<()> {
    let rng = &mut stream_rng(seed, Stream::GradCheck, &[0]);
    let x = Tensor::uniform(&[5, 6, 3], 1.0, rng);
    let k = Tensor::uniform(&[3, 3, 3, 2], 0.8, rng);
    let b = Tensor::uniform(&[2], 0.5, rng);
    let w = Tensor::uniform(&[5, 6, 2], 1.0, rng);
    let g = conv2d_backward(&x, &k, &w)?;
    out.push((
        "conv2d/input".into(),
        grad_check(|t| weighted_sum(&conv2d_forward(t, &k, &b).unwrap(), &w), &x, &g.input),
    ));
    out.push((
        "conv2d/kernels".into(),
        grad_check(|t| weighted_sum(&conv2d_forward(&x, t, &b).unwrap(), &w), &k, &g.kernels),
    ));
    out.push((
        "conv2d/bias".into(),
        grad_check(|t| weighted_sum(&conv2d_forward(&x, &k, t).unwrap(), &w), &b, &g.bias),
    ));
    Ok(())
}

fn check_relu(seed: u64, out: &mut Vec<(String, f64)>) {
    let rng = &mut stream_rng(seed, Stream::GradCheck, &[1]);
    let x = lattice(&[9, 5], rng);
    let w = Tensor::uniform(&[9, 5], 1.0, rng);
    let analytic = relu_backward(&x, &w);
    out.push((
        "relu/input".into(),
        grad_check(|t| weighted_sum(&relu(t), &w), &x, &analytic),
    ));
}

fn check_maxpool(seed: u64, out: &mut Vec<(String, f64)>) -> Result<()> {
    let rng = &mut stream_rng(seed, Stream::GradCheck, &[2]);
    // 7x5 with window/stride 3 exercises partial windows on both edges.
    let x = lattice(&[7, 5, 2], rng);
    let trace = maxpool2d(&x, 3, 3)?;
    let w = Tensor::uniform(trace.output.shape(), 1.0, rng);
    let analytic = maxpool2d_backward(&trace, &w);
    out.push((
        "maxpool/input".into(),
        grad_check(
            |t| weighted_sum(&maxpool2d(t, 3, 3).unwrap().output, &w),
            &x,
            &analytic,
        ),
    ));
    Ok(())
}

fn check_linear(seed: u64, out: &mut Vec<(String, f64)>) -> Result<()> {
    let rng = &mut stream_rng(seed, Stream::GradCheck, &[3]);
    let x = Tensor::uniform(&[10], 1.0, rng);
    let weights = Tensor::uniform(&[10, 3], 0.8, rng);
    let bias = Tensor::uniform(&[3], 0.5, rng);
    let w = Tensor::uniform(&[3], 1.0, rng);
    let g = linear_backward(x.data(), &weights, w.data())?;
    out.push((
        "linear/input".into(),
        grad_check(
            |t| dotv(&linear_forward(t.data(), &weights, &bias).unwrap(), w.data()),
            &x,
            &Tensor::new(vec![10], g.input.clone())?,
        ),
    ));
    out.push((
        "linear/weights".into(),
        grad_check(
            |t| dotv(&linear_forward(x.data(), t, &bias).unwrap(), w.data()),
            &weights,
            &g.weights,
        ),
    ));
    out.push((
        "linear/bias".into(),
        grad_check(
            |t| dotv(&linear_forward(x.data(), &weights, t).unwrap(), w.data()),
            &bias,
            &g.bias,
        ),
    ));
    Ok(())
}

fn check_losses(seed: u64, out: &mut Vec<(String, f64)>) {
    let rng = &mut stream_rng(seed, Stream::GradCheck, &[4]);
    let z = Tensor::uniform(&[1], 2.5, rng);

    let s = sigmoid(z.data()[0]);
    let analytic = Tensor::new(vec![1], vec![sigmoid_grad(s)]).unwrap();
    out.push((
        "sigmoid/input".into(),
        grad_check(|t| sigmoid(t.data()[0]), &z, &analytic),
    ));

    for target in [0.0, 1.0] {
        let (_, p) = bce_from_logit(z.data()[0], target);
        let analytic = Tensor::new(vec![1], vec![bce_grad_logit(p, target)]).unwrap();
        out.push((
            format!("bce_logit/target{}", target as u8),
            grad_check(|t| bce_from_logit(t.data()[0], target).0, &z, &analytic),
        ));
    }
}

fn random_lstm(n: usize, d: usize, rng: &mut impl Rng) -> LstmParams {
    LstmParams {
        w_input: Tensor::uniform(&[n, 4 * d], 0.6, rng),
        w_hidden: Tensor::uniform(&[d, 4 * d], 0.6, rng),
        bias: Tensor::uniform(&[4 * d], 0.4, rng),
    }
}

fn step_weights(t_len: usize, width: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    (0..t_len)
        .map(|_| (0..width).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

fn check_lstm(seed: u64, out: &mut Vec<(String, f64)>) -> Result<()> {
    let rng = &mut stream_rng(seed, Stream::GradCheck, &[5]);
    let (n, d, t_len) = (4usize, 3usize, 3usize);
    let params = random_lstm(n, d, rng);
    let flat = Tensor::uniform(&[t_len * n], 1.0, rng);
    let wh = step_weights(t_len, d, rng);

    let views: Vec<&[f64]> = flat.data().chunks(n).collect();
    let trace = lstm_forward(&params, &views)?;
    let (grads, d_xs) = lstm_backward(&params, &views, &trace, &wh)?;
    let (c_wi, t_wi) = condition(&params.w_input, &grads.w_input, rng)?;
    let (c_wh, t_wh) = condition(&params.w_hidden, &grads.w_hidden, rng)?;
    let (c_b, t_b) = condition(&params.bias, &grads.bias, rng)?;
    let (c_x, t_x) = condition(&flat, &Tensor::new(vec![t_len * n], d_xs.concat())?, rng)?;

    let loss = |p: &LstmParams, flat: &Tensor| {
        let views: Vec<&[f64]> = flat.data().chunks(n).collect();
        let trace = lstm_forward(p, &views).unwrap();
        (0..t_len).map(|t| dotv(trace.hidden(t), &wh[t])).sum::<f64>()
            + ridge_term(&p.w_input, &c_wi)
            + ridge_term(&p.w_hidden, &c_wh)
            + ridge_term(&p.bias, &c_b)
            + ridge_term(flat, &c_x)
    };

    out.push((
        "lstm/w_input".into(),
        grad_check(
            |t| loss(&LstmParams { w_input: t.clone(), ..params.clone() }, &flat),
            &params.w_input,
            &t_wi,
        ),
    ));
    out.push((
        "lstm/w_hidden".into(),
        grad_check(
            |t| loss(&LstmParams { w_hidden: t.clone(), ..params.clone() }, &flat),
            &params.w_hidden,
            &t_wh,
        ),
    ));
    out.push((
        "lstm/bias".into(),
        grad_check(
            |t| loss(&LstmParams { bias: t.clone(), ..params.clone() }, &flat),
            &params.bias,
            &t_b,
        ),
    ));
    out.push(("lstm/input".into(), grad_check(|t| loss(&params, t), &flat, &t_x)));
    Ok(())
}

fn check_bilstm(seed: u64, out: &mut Vec<(String, f64)>) -> Result<()> {
    let rng = &mut stream_rng(seed, Stream::GradCheck, &[6]);
    let (n, d, t_len) = (3usize, 2usize, 4usize);
    let fwd = random_lstm(n, d, rng);
    let bwd = random_lstm(n, d, rng);
    let flat = Tensor::uniform(&[t_len * n], 1.0, rng);
    let wh = step_weights(t_len, 2 * d, rng);

    let views: Vec<&[f64]> = flat.data().chunks(n).collect();
    let trace = bilstm_forward(&fwd, &bwd, &views)?;
    let (fg, bg, d_xs) = bilstm_backward(&fwd, &bwd, &views, &trace, &wh)?;

    // Conditioned values and combined gradients for all seven tensors, in a
    // fixed order: fwd params, bwd params, input.
    let d_flat = Tensor::new(vec![t_len * n], d_xs.concat())?;
    let raw = [
        (&fwd.w_input, &fg.w_input),
        (&fwd.w_hidden, &fg.w_hidden),
        (&fwd.bias, &fg.bias),
        (&bwd.w_input, &bg.w_input),
        (&bwd.w_hidden, &bg.w_hidden),
        (&bwd.bias, &bg.bias),
        (&flat, &d_flat),
    ];
    let mut centers = Vec::with_capacity(7);
    let mut totals = Vec::with_capacity(7);
    for (values, grad) in raw {
        let (c, t) = condition(values, grad, rng)?;
        centers.push(c);
        totals.push(t);
    }

    let loss = |f: &LstmParams, b: &LstmParams, flat: &Tensor| {
        let views: Vec<&[f64]> = flat.data().chunks(n).collect();
        let trace = bilstm_forward(f, b, &views).unwrap();
        let tensors = [&f.w_input, &f.w_hidden, &f.bias, &b.w_input, &b.w_hidden, &b.bias, flat];
        (0..t_len).map(|t| dotv(&trace.output(t), &wh[t])).sum::<f64>()
            + tensors.iter().zip(&centers).map(|(t, c)| ridge_term(t, c)).sum::<f64>()
    };

    let tags = ["fwd_w_input", "fwd_w_hidden", "fwd_bias", "bwd_w_input", "bwd_w_hidden", "bwd_bias"];
    for (slot, tag) in tags.iter().enumerate() {
        let tensor = match slot {
            0 => &fwd.w_input,
            1 => &fwd.w_hidden,
            2 => &fwd.bias,
            3 => &bwd.w_input,
            4 => &bwd.w_hidden,
            _ => &bwd.bias,
        };
        let err = grad_check(
            |t| {
                let mut f2 = fwd.clone();
                let mut b2 = bwd.clone();
                match slot {
                    0 => f2.w_input = t.clone(),
                    1 => f2.w_hidden = t.clone(),
                    2 => f2.bias = t.clone(),
                    3 => b2.w_input = t.clone(),
                    4 => b2.w_hidden = t.clone(),
                    _ => b2.bias = t.clone(),
                }
                loss(&f2, &b2, &flat)
            },
            tensor,
            &totals[slot],
        );
        out.push((format!("bilstm/{tag}"), err));
    }
    out.push((
        "bilstm/input".into(),
        grad_check(|t| loss(&fwd, &bwd, t), &flat, &totals[6]),
    ));
    Ok(())
}

/// Shrunk full-model configuration: 9x9 chips, 4 channels, T=3.
pub fn shrunk_config() -> ModelConfig {
    ModelConfig {
        input_channels: 4,
        conv_filters: 3,
        lstm_hidden: 5,
        band_subset: vec![0, 1, 2, 3],
        height: 9,
        width: 9,
        ..ModelConfig::default()
    }
}

/// True when no ReLU input sits within the margin of zero and every pool
/// window's top-two gap exceeds it (all-negative windows are stable as-is).
fn kink_free(act: &Tensor, config: &ModelConfig) -> bool {
    let (h, w, c) = (config.height, config.width, config.conv_filters);
    let data = act.data();
    let (window, stride) = (config.pool_window, config.pool_stride);
    for oy in 0..h.div_ceil(stride) {
        for ox in 0..w.div_ceil(stride) {
            for ch in 0..c {
                let mut top1 = f64::NEG_INFINITY;
                let mut top2 = f64::NEG_INFINITY;
                for y in oy * stride..(oy * stride + window).min(h) {
                    for x in ox * stride..(ox * stride + window).min(w) {
                        let v = data[(y * w + x) * c + ch];
                        if v > top1 {
                            top2 = top1;
                            top1 = v;
                        } else if v > top2 {
                            top2 = v;
                        }
                    }
                }
                if top1 > 0.0 && top1 - top2 <= KINK_MARGIN {
                    return false;
                }
            }
        }
    }
    true
}

/// Frame sets whose conv activations and pool decisions all clear the kink
/// margin, by rejection; shared with external gradient probes.
pub fn screened_frames(
    config: &ModelConfig,
    params: &ModelParams,
    t_len: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Tensor>> {
    let shape = [config.height, config.width, config.input_channels];
    'outer: for _ in 0..5000 {
        let frames: Vec<Tensor> = (0..t_len).map(|_| Tensor::uniform(&shape, 1.0, rng)).collect();
        for frame in &frames {
            let conv = conv2d_forward(frame, &params.conv_kernels, &params.conv_bias)?;
            if conv.data().iter().any(|v| v.abs() <= KINK_MARGIN) {
                continue 'outer;
            }
            if !kink_free(&relu(&conv), config) {
                continue 'outer;
            }
        }
        return Ok(frames);
    }
    Err(Error::InvalidConfig("no kink-free gradcheck instance found".into()))
}

/// Strength of the conditioning term added to smooth (LSTM/model) cases.
const RIDGE: f64 = 1e-2;
/// Smallest analytic gradient magnitude accepted after conditioning; keeps
/// every coordinate well above the `h^2` truncation noise (~1e-7 through
/// tanh chains).
const GRAD_FLOOR: f64 = 2e-3;

/// Quadratic-term center for one coordinate: offset by [0.5, 1) on a random
/// side, redrawn while the raw gradient cancels the combined one below the
/// floor. Returns the center and the combined gradient.
fn pick_center(g: f64, w: f64, rng: &mut impl Rng) -> Result<(f64, f64)> {
    for _ in 0..100 {
        let m = rng.random_range(0.5..1.0);
        let c = if rng.random::<bool>() { w + m } else { w - m };
        let total = g + RIDGE * (w - c);
        if total.abs() >= GRAD_FLOOR {
            return Ok((c, total));
        }
    }
    Err(Error::InvalidConfig("no conditioned gradcheck center found".into()))
}

/// Centers and combined analytic gradient for one tensor.
fn condition(values: &Tensor, raw_grad: &Tensor, rng: &mut impl Rng) -> Result<(Tensor, Tensor)> {
    let mut centers = Vec::with_capacity(values.len());
    let mut totals = Vec::with_capacity(values.len());
    for (&g, &w) in raw_grad.data().iter().zip(values.data()) {
        let (c, t) = pick_center(g, w, rng)?;
        centers.push(c);
        totals.push(t);
    }
    Ok((
        Tensor::new(values.shape().to_vec(), centers)?,
        Tensor::new(values.shape().to_vec(), totals)?,
    ))
}

fn ridge_term(values: &Tensor, centers: &Tensor) -> f64 {
    0.5 * RIDGE
        * values
            .data()
            .iter()
            .zip(centers.data())
            .map(|(&v, &c)| (v - c) * (v - c))
            .sum::<f64>()
}

fn check_model(seed: u64, out: &mut Vec<(String, f64)>) -> Result<()> {
    let rng = &mut stream_rng(seed, Stream::GradCheck, &[7]);
    let config = shrunk_config();
    config.validate()?;
    let params = ModelParams::init(&config, seed)?;

    // Central FD at h = 1e-3 cannot resolve coordinates whose gradient is
    // orders of magnitude below the truncation noise of the smooth part, so
    // the instance is conditioned the textbook way: an offset quadratic
    // `0.5 * RIDGE * sum((w - c)^2)` gives every coordinate a gradient term
    // of magnitude RIDGE * |w - c| with |w - c| in [0.5, 1], and central
    // differences are exact on quadratics. Each center is redrawn until the
    // model part does not cancel the combined gradient below GRAD_FLOOR.
    let frames = screened_frames(&config, &params, 3, rng)?;
    let wv: Vec<f64> = (0..frames.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let trace = forward(&frames, &params, &config)?;
    let grads = backward(&frames, &params, &config, &trace, &wv)?;

    let mut centers = Vec::with_capacity(10);
    let mut totals = Vec::with_capacity(10);
    for (g, w) in grads.tensors().iter().zip(params.tensors()) {
        let (c, t) = condition(w, g, rng)?;
        centers.push(c);
        totals.push(t);
    }

    let loss = |p: &ModelParams| {
        let trace = forward(&frames, p, &config).unwrap();
        let ridge: f64 = p.tensors().iter().zip(&centers).map(|(t, c)| ridge_term(t, c)).sum();
        dotv(&trace.logits, &wv) + ridge
    };

    for (i, name) in PARAM_NAMES.iter().enumerate() {
        let err = grad_check(
            |t| {
                let mut p2 = params.clone();
                *p2.tensors_mut()[i] = t.clone();
                loss(&p2)
            },
            params.tensors()[i],
            &totals[i],
        );
        out.push((format!("model/{name}"), err));
    }
    Ok(())
}
