//! Dense f64 building blocks with hand-written reverse-mode gradients.
//!
//! Everything here is deliberately allocation-simple: plain `Vec<f64>`
//! tensors, explicit loops, and exact backward passes that are validated
//! against central finite differences in the tests.

pub mod activation;
pub mod adam;
pub mod conv;
pub mod gradcheck;
pub mod kernels;
pub mod linear;
pub mod loss;
pub mod lstm;
pub mod pool;
pub mod tensor;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_grad};
pub use adam::{AdamHyper, AdamState};
pub use conv::{conv2d_backward, conv2d_forward, conv2d_param_grads, Conv2dGrads};
pub use gradcheck::{finite_difference, grad_check, max_rel_error, FD_STEP};
pub use kernels::{axpy, dot, gemv_acc, ger_acc};
pub use linear::{linear_backward, linear_forward, LinearGrads};
pub use loss::{bce_from_logit, bce_grad_logit, bce_loss, LOG_CLAMP};
pub use lstm::{
    bilstm_backward, bilstm_forward, lstm_backward, lstm_cell, lstm_forward, BiLstmTrace,
    LstmGrads, LstmParams, LstmStep, LstmTrace,
};
pub use pool::{maxpool2d, maxpool2d_backward, PoolTrace};
pub use tensor::Tensor;
