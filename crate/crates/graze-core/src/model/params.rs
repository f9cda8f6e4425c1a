//! Parameter containers, deterministic initialization, and the fixed tensor
//! order shared by the optimizer and the checkpoint format.

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::numerics::{LstmParams, Tensor};
use crate::rng::{stream_rng, Stream};

/// Declared parameter order. Checkpoints, Adam state, and gradient
/// containers all follow it; reordering breaks saved artifacts.
pub const PARAM_NAMES: [&str; 10] = [
    "conv_kernels",
    "conv_bias",
    "lstm_fwd_w_input",
    "lstm_fwd_w_hidden",
    "lstm_fwd_bias",
    "lstm_bwd_w_input",
    "lstm_bwd_w_hidden",
    "lstm_bwd_bias",
    "classifier_weights",
    "classifier_bias",
];

/// Tensor shapes in declared order for a given configuration.
pub fn param_shapes(config: &ModelConfig) -> [Vec<usize>; 10] {
    let k = config.conv_kernel;
    let cin = config.input_channels;
    let f = config.conv_filters;
    let n = config.feature_len();
    let d = config.lstm_hidden;
    [
        vec![k, k, cin, f],
        vec![f],
        vec![n, 4 * d],
        vec![d, 4 * d],
        vec![4 * d],
        vec![n, 4 * d],
        vec![d, 4 * d],
        vec![4 * d],
        vec![2 * d, 1],
        vec![1],
    ]
}

fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub conv_kernels: Tensor,
    pub conv_bias: Tensor,
    pub lstm_fwd: LstmParams,
    pub lstm_bwd: LstmParams,
    pub classifier_weights: Tensor,
    pub classifier_bias: Tensor,
    pub init_seed: u64,
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases except the LSTM forget gates at
    /// +1. Weight tensors are drawn in declared order from one stream, so a
    /// given (config, seed) pair always produces the same parameters.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(seed, Stream::Init, &[]);
        let k = config.conv_kernel;
        let cin = config.input_channels;
        let f = config.conv_filters;
        let n = config.feature_len();
        let d = config.lstm_hidden;

        let conv_kernels = Tensor::uniform(
            &[k, k, cin, f],
            glorot_limit(k * k * cin, k * k * f),
            &mut rng,
        );
        let mut lstm = || -> LstmParams {
            let w_input = Tensor::uniform(&[n, 4 * d], glorot_limit(n, d), &mut rng);
            let w_hidden = Tensor::uniform(&[d, 4 * d], glorot_limit(d, d), &mut rng);
            let mut bias = Tensor::zeros(&[4 * d]);
            // Gate order is [input, forget, candidate, output].
            for v in &mut bias.data_mut()[d..2 * d] {
                *v = 1.0;
            }
            LstmParams { w_input, w_hidden, bias }
        };
        let lstm_fwd = lstm();
        let lstm_bwd = lstm();
        let classifier_weights = Tensor::uniform(&[2 * d, 1], glorot_limit(2 * d, 1), &mut rng);

        Ok(Self {
            conv_kernels,
            conv_bias: Tensor::zeros(&[f]),
            lstm_fwd,
            lstm_bwd,
            classifier_weights,
            classifier_bias: Tensor::zeros(&[1]),
            init_seed: seed,
        })
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

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 10] {
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

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        let shapes = param_shapes(config);
        for ((tensor, shape), name) in self.tensors().iter().zip(&shapes).zip(PARAM_NAMES) {
            if tensor.shape() != shape.as_slice() {
                return Err(Error::shape(
                    "model_params",
                    format!("{name}: {shape:?}"),
                    format!("{:?}", tensor.shape()),
                ));
            }
            if !tensor.all_finite() {
                return Err(Error::NonFinite {
                    context: format!("model parameter {name}"),
                });
            }
        }
        Ok(())
    }
}

pub const DEFAULT_MEMBERS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleParams {
    pub config: ModelConfig,
    pub members: Vec<ModelParams>,
}

impl EnsembleParams {
    /// Fresh ensemble with member i initialized from `base_seed + i`.
    pub fn init(config: &ModelConfig, member_count: usize, base_seed: u64) -> Result<Self> {
        if member_count == 0 {
            return Err(Error::InvalidConfig("ensemble needs at least one member".into()));
        }
        let members = (0..member_count)
            .map(|i| ModelParams::init(config, base_seed + i as u64))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { config: config.clone(), members })
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.members.is_empty() {
            return Err(Error::InvalidConfig("ensemble has no members".into()));
        }
        for m in &self.members {
            m.validate(&self.config)?;
        }
        Ok(())
    }
}
