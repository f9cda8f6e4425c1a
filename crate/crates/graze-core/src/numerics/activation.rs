//! Elementwise activations. The ReLU subgradient at 0 is 0.

use super::tensor::Tensor;

pub fn relu(t: &Tensor) -> Tensor {
    let data = t.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::new(t.shape().to_vec(), data).expect("shape preserved")
}

/// Upstream gradient gated by the forward input: passes where `input > 0`.
pub fn relu_backward(input: &Tensor, upstream: &Tensor) -> Tensor {
    debug_assert!(input.same_shape(upstream));
    let data = input
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(input.shape().to_vec(), data).expect("shape preserved")
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn sigmoid_grad(s: f64) -> f64 {
    s * (1.0 - s)
}
