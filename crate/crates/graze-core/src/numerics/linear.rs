//! Affine map `y = x W + b` with weights `[n, m]`.

use super::kernels::axpy;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub struct LinearGrads {
    pub input: Vec<f64>,
    pub weights: Tensor,
    pub bias: Tensor,
}

pub fn linear_forward(input: &[f64], weights: &Tensor, bias: &Tensor) -> Result<Vec<f64>> {
    let (n, m) = match weights.shape() {
        [n, m] => (*n, *m),
        other => return Err(Error::shape("linear", "[n, m] weights", format!("{other:?}"))),
    };
    if input.len() != n {
        return Err(Error::shape("linear", format!("{n}-vector input"), format!("{}", input.len())));
    }
    if bias.shape() != [m] {
        return Err(Error::shape("linear", format!("[{m}] bias"), format!("{:?}", bias.shape())));
    }
    let wd = weights.data();
    let mut out = bias.data().to_vec();
    for (i, &xv) in input.iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        axpy(&mut out, xv, &wd[i * m..(i + 1) * m]);
    }
    Ok(out)
}

pub fn linear_backward(input: &[f64], weights: &Tensor, upstream: &[f64]) -> Result<LinearGrads> {
    let (n, m) = match weights.shape() {
        [n, m] => (*n, *m),
        other => return Err(Error::shape("linear", "[n, m] weights", format!("{other:?}"))),
    };
    if input.len() != n || upstream.len() != m {
        return Err(Error::shape(
            "linear_backward",
            format!("input {n}, upstream {m}"),
            format!("input {}, upstream {}", input.len(), upstream.len()),
        ));
    }
    let wd = weights.data();
    let mut d_input = vec![0.0f64; n];
    let mut d_weights = vec![0.0f64; n * m];
    for i in 0..n {
        let row = &wd[i * m..(i + 1) * m];
        let mut acc = 0.0;
        for j in 0..m {
            acc = row[j].mul_add(upstream[j], acc);
            d_weights[i * m + j] = input[i] * upstream[j];
        }
        d_input[i] = acc;
    }
    Ok(LinearGrads {
        input: d_input,
        weights: Tensor::new(vec![n, m], d_weights)?,
        bias: Tensor::new(vec![m], upstream.to_vec())?,
    })
}
