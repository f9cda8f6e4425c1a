//! Max pooling over spatial windows, channel-last layout.
//!
//! Edge windows may be partial; the output grid is `ceil(H/stride) x
//! ceil(W/stride)`. Ties inside a window resolve to the first element in
//! row-major order, and the backward pass routes each window's gradient to
//! that single argmax.

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub struct PoolTrace {
    pub output: Tensor,
    /// Flat input index of the selected maximum, one per output element.
    pub argmax: Vec<usize>,
    input_shape: Vec<usize>,
}

pub fn maxpool2d(input: &Tensor, window: usize, stride: usize) -> Result<PoolTrace> {
    let (h, w, ch) = match input.shape() {
        [h, w, c] => (*h, *w, *c),
        other => return Err(Error::shape("maxpool2d", "[H, W, C]", format!("{other:?}"))),
    };
    if window == 0 || stride == 0 {
        return Err(Error::InvalidConfig("pool window and stride must be positive".into()));
    }
    let oh = h.div_ceil(stride);
    let ow = w.div_ceil(stride);
    let x = input.data();
    let mut out = vec![0.0f64; oh * ow * ch];
    let mut argmax = vec![0usize; oh * ow * ch];

    for oy in 0..oh {
        let y0 = oy * stride;
        let y1 = (y0 + window).min(h);
        for ox in 0..ow {
            let x0 = ox * stride;
            let x1 = (x0 + window).min(w);
            let out_base = (oy * ow + ox) * ch;
            for c in 0..ch {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0usize;
                for yy in y0..y1 {
                    for xx in x0..x1 {
                        let idx = (yy * w + xx) * ch + c;
                        if x[idx] > best {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                }
                out[out_base + c] = best;
                argmax[out_base + c] = best_idx;
            }
        }
    }

    Ok(PoolTrace {
        output: Tensor::new(vec![oh, ow, ch], out)?,
        argmax,
        input_shape: vec![h, w, ch],
    })
}

pub fn maxpool2d_backward(trace: &PoolTrace, upstream: &Tensor) -> Tensor {
    debug_assert!(upstream.same_shape(&trace.output));
    let mut grad = Tensor::zeros(&trace.input_shape);
    let g = grad.data_mut();
    for (i, &src) in trace.argmax.iter().enumerate() {
        g[src] += upstream.data()[i];
    }
    grad
}
