//! LSTM cell, unidirectional sequence pass with full BPTT, and the
//! bidirectional composition.
//!
//! Gate order within the stacked dimension is `[input, forget, candidate,
//! output]`. Weights are stored input-major (`w_input: [n, 4d]`,
//! `w_hidden: [d, 4d]`) so each nonzero input coordinate touches one
//! contiguous row; flattened masked feature vectors carry many exact zeros
//! and those rows are skipped.

use super::activation::sigmoid;
use super::kernels::{axpy, dot, gemv_acc};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `[n, 4d]`, row i is the contribution of input coordinate i to all gates.
    pub w_input: Tensor,
    /// `[d, 4d]`, row j is the contribution of the previous hidden state's coordinate j.
    pub w_hidden: Tensor,
    /// `[4d]`.
    pub bias: Tensor,
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            w_input: Tensor::zeros(&[input_dim, 4 * hidden_dim]),
            w_hidden: Tensor::zeros(&[hidden_dim, 4 * hidden_dim]),
            bias: Tensor::zeros(&[4 * hidden_dim]),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_hidden.shape()[0]
    }

    pub fn input_dim(&self) -> usize {
        self.w_input.shape()[0]
    }

    fn check_input(&self, x_len: usize) -> Result<()> {
        if x_len != self.input_dim() {
            return Err(Error::shape(
                "lstm",
                format!("{}-vector input", self.input_dim()),
                format!("{x_len}"),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LstmGrads {
    pub w_input: Tensor,
    pub w_hidden: Tensor,
    pub bias: Tensor,
}

/// Per-step cache kept for backpropagation through time.
#[derive(Debug, Clone)]
pub struct LstmStep {
    /// Activated gates `[i | f | g | o]`, length 4d.
    gates: Vec<f64>,
    /// Cell state after this step.
    c: Vec<f64>,
    /// `tanh(c)`.
    tc: Vec<f64>,
    /// Hidden state after this step.
    pub h: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmTrace {
    pub steps: Vec<LstmStep>,
    d: usize,
}

impl LstmTrace {
    pub fn hidden(&self, t: usize) -> &[f64] {
        &self.steps[t].h
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

fn gate_preacts(params: &LstmParams, x: &[f64], h_prev: &[f64]) -> Vec<f64> {
    let mut pre = params.bias.data().to_vec();
    gemv_acc(&mut pre, x, params.w_input.data());
    gemv_acc(&mut pre, h_prev, params.w_hidden.data());
    pre
}

/// One cell application: standard input/forget/candidate/output gating.
pub fn lstm_cell(params: &LstmParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<LstmStep> {
    params.check_input(x.len())?;
    let d = params.hidden_dim();
    if h_prev.len() != d || c_prev.len() != d {
        return Err(Error::shape("lstm_cell", format!("{d}-vector state"), format!("{}/{}", h_prev.len(), c_prev.len())));
    }
    let pre = gate_preacts(params, x, h_prev);
    let mut gates = vec![0.0; 4 * d];
    for j in 0..d {
        gates[j] = sigmoid(pre[j]);
        gates[d + j] = sigmoid(pre[d + j]);
        gates[2 * d + j] = pre[2 * d + j].tanh();
        gates[3 * d + j] = sigmoid(pre[3 * d + j]);
    }
    let mut c = vec![0.0; d];
    let mut tc = vec![0.0; d];
    let mut h = vec![0.0; d];
    for j in 0..d {
        c[j] = gates[d + j] * c_prev[j] + gates[j] * gates[2 * d + j];
        tc[j] = c[j].tanh();
        h[j] = gates[3 * d + j] * tc[j];
    }
    Ok(LstmStep { gates, c, tc, h })
}

/// Runs the cell over a sequence starting from zero state.
pub fn lstm_forward(params: &LstmParams, xs: &[&[f64]]) -> Result<LstmTrace> {
    if xs.is_empty() {
        return Err(Error::InvalidConfig("empty sequence fed to lstm".into()));
    }
    let d = params.hidden_dim();
    let zeros = vec![0.0; d];
    let mut steps = Vec::with_capacity(xs.len());
    for (t, x) in xs.iter().enumerate() {
        let (h_prev, c_prev) = if t == 0 {
            (zeros.as_slice(), zeros.as_slice())
        } else {
            let prev: &LstmStep = &steps[t - 1];
            (prev.h.as_slice(), prev.c.as_slice())
        };
        steps.push(lstm_cell(params, x, h_prev, c_prev)?);
    }
    Ok(LstmTrace { steps, d })
}

/// Backpropagation through time. `d_hidden[t]` is the upstream gradient on
/// the step-t hidden state. Returns parameter gradients and per-step input
/// gradients.
pub fn lstm_backward(
    params: &LstmParams,
    xs: &[&[f64]],
    trace: &LstmTrace,
    d_hidden: &[Vec<f64>],
) -> Result<(LstmGrads, Vec<Vec<f64>>)> {
    let d = trace.d;
    let g4 = 4 * d;
    let t_len = trace.steps.len();
    assert_eq!(d_hidden.len(), t_len, "one upstream gradient per step");

    let mut grads = LstmGrads {
        w_input: Tensor::zeros(params.w_input.shape()),
        w_hidden: Tensor::zeros(params.w_hidden.shape()),
        bias: Tensor::zeros(params.bias.shape()),
    };
    let mut d_xs = vec![vec![0.0; params.input_dim()]; t_len];

    let zeros = vec![0.0; d];
    let mut dh_next = vec![0.0; d];
    let mut dc_next = vec![0.0; d];

    for t in (0..t_len).rev() {
        let step = &trace.steps[t];
        let (h_prev, c_prev) = if t == 0 {
            (zeros.as_slice(), zeros.as_slice())
        } else {
            (trace.steps[t - 1].h.as_slice(), trace.steps[t - 1].c.as_slice())
        };

        let mut dpre = vec![0.0; g4];
        let mut dc_prev = vec![0.0; d];
        for j in 0..d {
            let dh = d_hidden[t][j] + dh_next[j];
            let (gi, gf, gg, go) = (step.gates[j], step.gates[d + j], step.gates[2 * d + j], step.gates[3 * d + j]);
            let dc = dc_next[j] + dh * go * (1.0 - step.tc[j] * step.tc[j]);
            let d_o = dh * step.tc[j];
            dpre[3 * d + j] = d_o * go * (1.0 - go);
            dpre[j] = dc * gg * gi * (1.0 - gi);
            dpre[2 * d + j] = dc * gi * (1.0 - gg * gg);
            dpre[d + j] = dc * c_prev[j] * gf * (1.0 - gf);
            dc_prev[j] = dc * gf;
        }

        // Parameter and input gradients from the gate pre-activations. The
        // weight-gradient update skips zero activations (the added term is an
        // exact 0.0); the input/state gradient dot products never skip.
        let wi_grad = grads.w_input.data_mut();
        for (i, &xv) in xs[t].iter().enumerate() {
            d_xs[t][i] = dot(&dpre, &params.w_input.data()[i * g4..(i + 1) * g4]);
            if xv != 0.0 {
                axpy(&mut wi_grad[i * g4..(i + 1) * g4], xv, &dpre);
            }
        }
        let wh_grad = grads.w_hidden.data_mut();
        let mut dh_prev = vec![0.0; d];
        for j in 0..d {
            let hv = h_prev[j];
            dh_prev[j] = dot(&dpre, &params.w_hidden.data()[j * g4..(j + 1) * g4]);
            if hv != 0.0 {
                axpy(&mut wh_grad[j * g4..(j + 1) * g4], hv, &dpre);
            }
        }
        let b_grad = grads.bias.data_mut();
        for r in 0..g4 {
            b_grad[r] += dpre[r];
        }

        dh_next = dh_prev;
        dc_next = dc_prev;
    }

    Ok((grads, d_xs))
}

/// Forward and reverse passes of a bidirectional LSTM. The reverse trace is
/// indexed by processing order, i.e. its step s corresponds to sequence
/// position `T - 1 - s`.
#[derive(Debug, Clone)]
pub struct BiLstmTrace {
    pub fwd: LstmTrace,
    pub bwd: LstmTrace,
}

impl BiLstmTrace {
    pub fn len(&self) -> usize {
        self.fwd.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fwd.is_empty()
    }

    /// Concatenated `[forward state at t | reverse state at t]`, length 2d.
    pub fn output(&self, t: usize) -> Vec<f64> {
        let t_len = self.len();
        let mut out = self.fwd.hidden(t).to_vec();
        out.extend_from_slice(self.bwd.hidden(t_len - 1 - t));
        out
    }
}

pub fn bilstm_forward(fwd: &LstmParams, bwd: &LstmParams, xs: &[&[f64]]) -> Result<BiLstmTrace> {
    if xs.is_empty() {
        return Err(Error::InvalidConfig("empty sequence fed to bilstm".into()));
    }
    let reversed: Vec<&[f64]> = xs.iter().rev().copied().collect();
    Ok(BiLstmTrace {
        fwd: lstm_forward(fwd, xs)?,
        bwd: lstm_forward(bwd, &reversed)?,
    })
}

/// BPTT through both directions. `d_outputs[t]` is the gradient on the
/// concatenated step-t output. Returns gradients for the forward params, the
/// reverse params, and the per-position input gradients.
#[allow(clippy::type_complexity)]
pub fn bilstm_backward(
    fwd: &LstmParams,
    bwd: &LstmParams,
    xs: &[&[f64]],
    trace: &BiLstmTrace,
    d_outputs: &[Vec<f64>],
) -> Result<(LstmGrads, LstmGrads, Vec<Vec<f64>>)> {
    let d = fwd.hidden_dim();
    let t_len = xs.len();
    let mut dh_fwd = vec![vec![0.0; d]; t_len];
    let mut dh_bwd = vec![vec![0.0; d]; t_len];
    for t in 0..t_len {
        debug_assert_eq!(d_outputs[t].len(), 2 * d);
        dh_fwd[t].copy_from_slice(&d_outputs[t][..d]);
        // Position t lives at reverse-processing step T-1-t.
        dh_bwd[t_len - 1 - t].copy_from_slice(&d_outputs[t][d..]);
    }

    let (fwd_grads, dx_fwd) = lstm_backward(fwd, xs, &trace.fwd, &dh_fwd)?;
    let reversed: Vec<&[f64]> = xs.iter().rev().copied().collect();
    let (bwd_grads, dx_bwd) = lstm_backward(bwd, &reversed, &trace.bwd, &dh_bwd)?;

    let mut d_xs = dx_fwd;
    for (s, dx) in dx_bwd.into_iter().enumerate() {
        let t = t_len - 1 - s;
        for (a, b) in d_xs[t].iter_mut().zip(dx.iter()) {
            *a += b;
        }
    }
    Ok((fwd_grads, bwd_grads, d_xs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::{finite_difference, max_rel_error};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(n: usize, d: usize, seed: u64) -> LstmParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        LstmParams {
            w_input: Tensor::uniform(&[n, 4 * d], 0.6, &mut rng),
            w_hidden: Tensor::uniform(&[d, 4 * d], 0.6, &mut rng),
            bias: Tensor::uniform(&[4 * d], 0.3, &mut rng),
        }
    }

    #[test]
    fn zero_params_and_inputs_give_zero_state() {
        let params = LstmParams::zeros(3, 4);
        let step = lstm_cell(&params, &[0.0; 3], &[0.0; 4], &[0.0; 4]).unwrap();
        assert!(step.h.iter().all(|&v| v == 0.0));
        assert!(step.c.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_forget_gate_preserves_cell_state() {
        let d = 3;
        let mut params = LstmParams::zeros(2, d);
        // Forget gate saturated open, input gate saturated closed.
        for j in 0..d {
            params.bias.data_mut()[d + j] = 60.0;
            params.bias.data_mut()[j] = -60.0;
        }
        let c0 = vec![0.7, -0.3, 1.1];
        let mut c = c0.clone();
        let mut h = vec![0.0; d];
        for _ in 0..5 {
            let step = lstm_cell(&params, &[0.4, -0.9], &h, &c).unwrap();
            c = step.c.clone();
            h = step.h.clone();
        }
        for (a, b) in c.iter().zip(&c0) {
            assert!((a - b).abs() < 1e-12, "cell state drifted: {a} vs {b}");
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let params = LstmParams::zeros(3, 4);
        assert!(lstm_cell(&params, &[0.0; 2], &[0.0; 4], &[0.0; 4]).is_err());
        assert!(lstm_cell(&params, &[0.0; 3], &[0.0; 2], &[0.0; 4]).is_err());
        assert!(lstm_forward(&params, &[]).is_err());
    }

    #[test]
    fn bptt_gradients_match_finite_differences() {
        let (n, d, t_len) = (3usize, 4usize, 3usize);
        let params = random_params(n, d, 21);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let xs_flat = Tensor::uniform(&[t_len * n], 1.0, &mut rng);
        let probe: Vec<f64> = (0..t_len * d).map(|_| rng.random_range(-1.0..1.0)).collect();

        // Objective: fixed projection of every step's hidden state.
        let objective = |p: &LstmParams, flat: &[f64]| {
            let xs: Vec<&[f64]> = flat.chunks(n).collect();
            let trace = lstm_forward(p, &xs).unwrap();
            let mut acc = 0.0;
            for t in 0..t_len {
                for j in 0..d {
                    acc += trace.hidden(t)[j] * probe[t * d + j];
                }
            }
            acc
        };

        let xs: Vec<&[f64]> = xs_flat.data().chunks(n).collect();
        let trace = lstm_forward(&params, &xs).unwrap();
        let d_hidden: Vec<Vec<f64>> = (0..t_len).map(|t| probe[t * d..(t + 1) * d].to_vec()).collect();
        let (grads, d_xs) = lstm_backward(&params, &xs, &trace, &d_hidden).unwrap();

        let num = finite_difference(
            |wt| {
                let p = LstmParams { w_input: wt.clone(), ..params.clone() };
                objective(&p, xs_flat.data())
            },
            &params.w_input,
            1e-3,
        );
        assert!(max_rel_error(&grads.w_input, &num) < 1e-4, "w_input");

        let num = finite_difference(
            |wt| {
                let p = LstmParams { w_hidden: wt.clone(), ..params.clone() };
                objective(&p, xs_flat.data())
            },
            &params.w_hidden,
            1e-3,
        );
        assert!(max_rel_error(&grads.w_hidden, &num) < 1e-4, "w_hidden");

        let num = finite_difference(
            |bt| {
                let p = LstmParams { bias: bt.clone(), ..params.clone() };
                objective(&p, xs_flat.data())
            },
            &params.bias,
            1e-3,
        );
        assert!(max_rel_error(&grads.bias, &num) < 1e-4, "bias");

        let num = finite_difference(|xt| objective(&params, xt.data()), &xs_flat, 1e-3);
        let analytic = Tensor::new(vec![t_len * n], d_xs.concat()).unwrap();
        assert!(max_rel_error(&analytic, &num) < 1e-4, "inputs");
    }

    #[test]
    fn bilstm_single_step_concatenates_both_cells() {
        let (n, d) = (2usize, 3usize);
        let fwd = random_params(n, d, 31);
        let bwd = random_params(n, d, 32);
        let x = [0.3, -0.8];
        let trace = bilstm_forward(&fwd, &bwd, &[&x]).unwrap();
        let out = trace.output(0);
        let zeros = vec![0.0; d];
        let f_cell = lstm_cell(&fwd, &x, &zeros, &zeros).unwrap();
        let b_cell = lstm_cell(&bwd, &x, &zeros, &zeros).unwrap();
        assert_eq!(&out[..d], f_cell.h.as_slice());
        assert_eq!(&out[d..], b_cell.h.as_slice());
    }

    #[test]
    fn bilstm_output_width_is_twice_hidden_dim() {
        let d = 16;
        let fwd = random_params(5, d, 41);
        let bwd = random_params(5, d, 42);
        let xs_data: Vec<Vec<f64>> = (0..6).map(|i| vec![0.1 * i as f64; 5]).collect();
        let xs: Vec<&[f64]> = xs_data.iter().map(|v| v.as_slice()).collect();
        let trace = bilstm_forward(&fwd, &bwd, &xs).unwrap();
        assert_eq!(trace.len(), 6);
        for t in 0..6 {
            assert_eq!(trace.output(t).len(), 32);
        }
    }

    #[test]
    fn reversing_input_swaps_direction_roles() {
        let (n, d, t_len) = (3usize, 4usize, 5usize);
        let a = random_params(n, d, 51);
        let b = random_params(n, d, 52);
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let xs_data: Vec<Vec<f64>> = (0..t_len)
            .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let xs: Vec<&[f64]> = xs_data.iter().map(|v| v.as_slice()).collect();
        let reversed: Vec<&[f64]> = xs.iter().rev().copied().collect();

        let straight = bilstm_forward(&a, &b, &xs).unwrap();
        let flipped = bilstm_forward(&b, &a, &reversed).unwrap();

        for t in 0..t_len {
            let s = straight.output(t);
            let f = flipped.output(t_len - 1 - t);
            // Halves swap roles under reversal.
            assert_eq!(&s[..d], &f[d..]);
            assert_eq!(&s[d..], &f[..d]);
        }
    }
}
