//! Forward pass, reverse-mode gradients, and the single/ensemble prediction
//! rules.
//!
//! Each frame runs conv -> ReLU -> maxpool independently; the flattened
//! pooled features feed a bidirectional LSTM and each step's concatenated
//! hidden state goes through one shared linear unit and a sigmoid. The
//! backward pass keeps no conv activation maps: the pooled values double as
//! the ReLU outputs at the pool argmax positions, so the gradient re-enters
//! the conv stage through at most one position per pooled element.

use super::config::{ClassifierMode, ModelConfig};
use super::params::{param_shapes, EnsembleParams, ModelParams};
use crate::dataset::{Label, PreparedSample};
use crate::error::{Error, Result};
use crate::numerics::{
    bilstm_backward, bilstm_forward, conv2d_forward, conv2d_param_grads, linear_backward,
    linear_forward, maxpool2d, relu, sigmoid, BiLstmTrace, LstmGrads, PoolTrace, Tensor,
};

/// Everything the backward pass needs, plus the per-step outputs.
pub struct ForwardTrace {
    /// Flattened pooled features per frame.
    pub features: Vec<Vec<f64>>,
    pools: Vec<PoolTrace>,
    bilstm: BiLstmTrace,
    /// Concatenated biLSTM outputs per step, length 2d each.
    outputs: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

/// Band selection and polygon-channel handling for one prepared sample.
/// The masked/unmasked choice is made during normalization; this only
/// reshapes channels to what the configuration declares.
pub fn prepare_for_model(sample: &PreparedSample, config: &ModelConfig) -> Result<Vec<Tensor>> {
    config.validate()?;
    let (h, w) = (config.height, config.width);
    let mut out = Vec::with_capacity(sample.frames.len());
    for frame in &sample.frames {
        let (fh, fw, fc) = match frame.shape() {
            [fh, fw, fc] => (*fh, *fw, *fc),
            other => return Err(Error::shape("prepare_for_model", "[H, W, C]", format!("{other:?}"))),
        };
        if fh != h || fw != w {
            return Err(Error::shape(
                "prepare_for_model",
                format!("{h}x{w} chip"),
                format!("{fh}x{fw}"),
            ));
        }
        if let Some(&max_band) = config.band_subset.last() {
            if max_band >= fc {
                return Err(Error::shape(
                    "prepare_for_model",
                    format!("at least {} channels", max_band + 1),
                    format!("{fc}"),
                ));
            }
        }
        let cm = config.input_channels;
        let add_poly = config.input_mode.adds_polygon_channel();
        if add_poly && sample.polygon_mask.len() != h * w {
            return Err(Error::shape(
                "prepare_for_model",
                format!("{}-pixel polygon mask", h * w),
                format!("{}", sample.polygon_mask.len()),
            ));
        }
        let src = frame.data();
        let mut data = vec![0.0f64; h * w * cm];
        for px in 0..h * w {
            let dst = &mut data[px * cm..(px + 1) * cm];
            for (slot, &band) in config.band_subset.iter().enumerate() {
                dst[slot] = src[px * fc + band];
            }
            if add_poly {
                dst[cm - 1] = f64::from(sample.polygon_mask[px]);
            }
        }
        out.push(Tensor::new(vec![h, w, cm], data)?);
    }
    Ok(out)
}

/// Full forward pass over one series of model-ready frames.
pub fn forward(frames: &[Tensor], params: &ModelParams, config: &ModelConfig) -> Result<ForwardTrace> {
    if frames.is_empty() {
        return Err(Error::InvalidConfig("forward needs at least one frame".into()));
    }
    for frame in frames {
        let expected = [config.height, config.width, config.input_channels];
        if frame.shape() != expected.as_slice() {
            return Err(Error::shape(
                "forward",
                format!("{expected:?} frame"),
                format!("{:?}", frame.shape()),
            ));
        }
    }

    let t_len = frames.len();
    let mut features = Vec::with_capacity(t_len);
    let mut pools = Vec::with_capacity(t_len);
    for frame in frames {
        let conv = conv2d_forward(frame, &params.conv_kernels, &params.conv_bias)?;
        let pool = maxpool2d(&relu(&conv), config.pool_window, config.pool_stride)?;
        features.push(pool.output.data().to_vec());
        pools.push(pool);
    }

    let xs: Vec<&[f64]> = features.iter().map(Vec::as_slice).collect();
    let bilstm = bilstm_forward(&params.lstm_fwd, &params.lstm_bwd, &xs)?;

    let mut outputs = Vec::with_capacity(t_len);
    let mut logits = Vec::with_capacity(t_len);
    let mut probs = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let out = bilstm.output(t);
        let z = linear_forward(&out, &params.classifier_weights, &params.classifier_bias)?[0];
        outputs.push(out);
        logits.push(z);
        probs.push(sigmoid(z));
    }

    Ok(ForwardTrace { features, pools, bilstm, outputs, logits, probs })
}

/// Gradients for every parameter tensor, in declared order.
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub conv_kernels: Tensor,
    pub conv_bias: Tensor,
    pub lstm_fwd: LstmGrads,
    pub lstm_bwd: LstmGrads,
    pub classifier_weights: Tensor,
    pub classifier_bias: Tensor,
}

impl ModelGrads {
    pub fn zeros(config: &ModelConfig) -> Self {
        let s = param_shapes(config);
        Self {
            conv_kernels: Tensor::zeros(&s[0]),
            conv_bias: Tensor::zeros(&s[1]),
            lstm_fwd: LstmGrads {
                w_input: Tensor::zeros(&s[2]),
                w_hidden: Tensor::zeros(&s[3]),
                bias: Tensor::zeros(&s[4]),
            },
            lstm_bwd: LstmGrads {
                w_input: Tensor::zeros(&s[5]),
                w_hidden: Tensor::zeros(&s[6]),
                bias: Tensor::zeros(&s[7]),
            },
            classifier_weights: Tensor::zeros(&s[8]),
            classifier_bias: Tensor::zeros(&s[9]),
        }
    }

    pub fn tensors(&self) -> [&Tensor; 10] {
        [
            &self.conv_kernels,
            &self.conv_bias,
            &self.lstm_fwd.w_input,
            &self.lstm_fwd.w_hidden,
            &self.lstm_fwd.bias,
            &self.lstm_bwd.w_input,
            &self.lstm_bwd.w_hidden,
            &self.lstm_bwd.bias,
            &self.classifier_weights,
            &self.classifier_bias,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor; 10] {
        [
            &mut self.conv_kernels,
            &mut self.conv_bias,
            &mut self.lstm_fwd.w_input,
            &mut self.lstm_fwd.w_hidden,
            &mut self.lstm_fwd.bias,
            &mut self.lstm_bwd.w_input,
            &mut self.lstm_bwd.w_hidden,
            &mut self.lstm_bwd.bias,
            &mut self.classifier_weights,
            &mut self.classifier_bias,
        ]
    }

    pub fn add_assign(&mut self, other: &ModelGrads) -> Result<()> {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.scale(factor);
        }
    }
}

/// Reverse pass from per-step logit gradients. `d_logits[t]` is dLoss/dz_t;
/// final-step training supplies zeros everywhere except the last entry.
pub fn backward(
    frames: &[Tensor],
    params: &ModelParams,
    config: &ModelConfig,
    trace: &ForwardTrace,
    d_logits: &[f64],
) -> Result<ModelGrads> {
    let t_len = frames.len();
    if d_logits.len() != t_len || trace.features.len() != t_len {
        return Err(Error::shape(
            "backward",
            format!("{t_len} logit gradients"),
            format!("{}", d_logits.len()),
        ));
    }
    let mut grads = ModelGrads::zeros(config);
    let two_d = config.lstm_output_len();

    // Classifier: shared across steps, so its gradients sum over steps.
    let mut d_outputs = vec![vec![0.0f64; two_d]; t_len];
    for t in 0..t_len {
        let dz = d_logits[t];
        if dz == 0.0 {
            continue;
        }
        let lin = linear_backward(&trace.outputs[t], &params.classifier_weights, &[dz])?;
        grads.classifier_weights.add_assign(&lin.weights)?;
        grads.classifier_bias.add_assign(&lin.bias)?;
        d_outputs[t] = lin.input;
    }

    let xs: Vec<&[f64]> = trace.features.iter().map(Vec::as_slice).collect();
    let (fwd_grads, bwd_grads, d_xs) =
        bilstm_backward(&params.lstm_fwd, &params.lstm_bwd, &xs, &trace.bilstm, &d_outputs)?;
    grads.lstm_fwd.w_input.add_assign(&fwd_grads.w_input)?;
    grads.lstm_fwd.w_hidden.add_assign(&fwd_grads.w_hidden)?;
    grads.lstm_fwd.bias.add_assign(&fwd_grads.bias)?;
    grads.lstm_bwd.w_input.add_assign(&bwd_grads.w_input)?;
    grads.lstm_bwd.w_hidden.add_assign(&bwd_grads.w_hidden)?;
    grads.lstm_bwd.bias.add_assign(&bwd_grads.bias)?;

    // Conv stage. A pooled value > 0 is the ReLU output at its argmax, so
    // the gradient passes there iff the pooled value is positive; a pooled
    // zero means the window's best pre-activation was <= 0 (subgradient 0).
    let conv_shape = [config.height, config.width, config.conv_filters];
    for t in 0..t_len {
        let pool = &trace.pools[t];
        let mut d_conv = Tensor::zeros(&conv_shape);
        let dc = d_conv.data_mut();
        let pooled = pool.output.data();
        let mut any = false;
        for (i, &src) in pool.argmax.iter().enumerate() {
            let g = d_xs[t][i];
            if g != 0.0 && pooled[i] > 0.0 {
                dc[src] += g;
                any = true;
            }
        }
        if !any {
            continue;
        }
        let (dk, db) = conv2d_param_grads(&frames[t], &params.conv_kernels, &d_conv)?;
        grads.conv_kernels.add_assign(&dk)?;
        grads.conv_bias.add_assign(&db)?;
    }

    Ok(grads)
}

/// Median of the last `k` values; mean of the two middle values when the
/// window is even.
pub fn median_of_last(probs: &[f64], k: usize) -> f64 {
    let k = k.min(probs.len()).max(1);
    let mut tail: Vec<f64> = probs[probs.len() - k..].to_vec();
    tail.sort_by(f64::total_cmp);
    if k % 2 == 1 {
        tail[k / 2]
    } else {
        0.5 * (tail[k / 2 - 1] + tail[k / 2])
    }
}

/// Turns a per-step probability sequence into a label under the configured
/// aggregation. Grazing wins at exactly 0.5.
pub fn decide(probs: &[f64], config: &ModelConfig) -> Label {
    let p = match config.classifier_mode {
        ClassifierMode::OnlyLast => *probs.last().expect("non-empty probability sequence"),
        ClassifierMode::LastFour => median_of_last(probs, config.vote_window),
    };
    if p >= 0.5 {
        Label::Grazing
    } else {
        Label::NoActivity
    }
}

pub fn predict_single(frames: &[Tensor], params: &ModelParams, config: &ModelConfig) -> Result<Label> {
    let trace = forward(frames, params, config)?;
    Ok(decide(&trace.probs, config))
}

/// Majority vote with ties resolved to grazing, so a non-grazed call always
/// has a strict majority behind it.
pub fn ensemble_vote(votes: &[Label]) -> Label {
    let grazing = votes.iter().filter(|&&v| v == Label::Grazing).count();
    if 2 * grazing >= votes.len() {
        Label::Grazing
    } else {
        Label::NoActivity
    }
}

pub fn predict_ensemble(frames: &[Tensor], ensemble: &EnsembleParams) -> Result<Label> {
    if ensemble.members.is_empty() {
        return Err(Error::InvalidConfig("ensemble has no members".into()));
    }
    let votes = ensemble
        .members
        .iter()
        .map(|m| predict_single(frames, m, &ensemble.config))
        .collect::<Result<Vec<_>>>()?;
    Ok(ensemble_vote(&votes))
}
