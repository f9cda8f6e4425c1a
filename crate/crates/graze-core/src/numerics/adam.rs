//! Adam optimizer with bias-corrected moment estimates.

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamHyper {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

/// Moment accumulators for a fixed, ordered list of parameter tensors.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
    pub hyper: AdamHyper,
}

impl AdamState {
    pub fn new(shapes: &[&[usize]], hyper: AdamHyper) -> Self {
        Self {
            m: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            t: 0,
            hyper,
        }
    }

    /// One update over all parameter tensors. The step counter increments
    /// before the bias correction. A non-finite gradient aborts with the
    /// offending parameter's name.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[&Tensor], names: &[&str]) -> Result<()> {
        assert_eq!(params.len(), self.m.len(), "parameter count differs from state");
        assert_eq!(grads.len(), self.m.len(), "gradient count differs from state");

        for ((name, param), grad) in names.iter().zip(params.iter()).zip(grads.iter()) {
            if !param.same_shape(grad) {
                return Err(Error::shape(
                    "adam_step",
                    format!("{name}: {:?}", param.shape()),
                    format!("{:?}", grad.shape()),
                ));
            }
            if !grad.all_finite() {
                return Err(Error::NonFinite {
                    context: format!("gradient of {name}"),
                });
            }
        }

        self.t += 1;
        let h = self.hyper;
        let bc1 = 1.0 - h.beta1.powi(self.t as i32);
        let bc2 = 1.0 - h.beta2.powi(self.t as i32);

        for i in 0..params.len() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let p = params[i].data_mut();
            let g = grads[i].data();
            for j in 0..p.len() {
                m[j] = h.beta1 * m[j] + (1.0 - h.beta1) * g[j];
                v[j] = h.beta2 * v[j] + (1.0 - h.beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= h.learning_rate * m_hat / (v_hat.sqrt() + h.epsilon);
            }
        }
        Ok(())
    }
}
