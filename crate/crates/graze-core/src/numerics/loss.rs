//! Binary cross-entropy with the gradient taken in logit space.

use super::activation::sigmoid;

pub const LOG_CLAMP: f64 = 1e-12;

/// `-[y ln p + (1-y) ln(1-p)]` with log arguments clamped at 1e-12.
pub fn bce_loss(p: f64, y: f64) -> f64 {
    let p1 = p.max(LOG_CLAMP);
    let p0 = (1.0 - p).max(LOG_CLAMP);
    -(y * p1.ln() + (1.0 - y) * p0.ln())
}

/// Loss and probability from the pre-sigmoid logit.
pub fn bce_from_logit(logit: f64, y: f64) -> (f64, f64) {
    let p = sigmoid(logit);
    (bce_loss(p, y), p)
}

/// d(loss)/d(logit) = p - y.
#[inline]
pub fn bce_grad_logit(p: f64, y: f64) -> f64 {
    p - y
}
