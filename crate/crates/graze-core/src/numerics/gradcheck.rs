//! Central finite-difference oracle for gradient verification.

use super::tensor::Tensor;
use rayon::prelude::*;

pub const FD_STEP: f64 = 1e-3;

/// Central differences of a scalar function at `x`, one coordinate at a time.
pub fn finite_difference<F>(f: F, x: &Tensor, h: f64) -> Tensor
where
    F: Fn(&Tensor) -> f64 + Sync,
{
    let grads: Vec<f64> = (0..x.len())
        .into_par_iter()
        .map(|i| {
            let mut plus = x.clone();
            plus.data_mut()[i] += h;
            let mut minus = x.clone();
            minus.data_mut()[i] -= h;
            (f(&plus) - f(&minus)) / (2.0 * h)
        })
        .collect();
    Tensor::new(x.shape().to_vec(), grads).expect("shape preserved")
}

/// `max_i |a_i - n_i| / max(1e-8, |a_i| + |n_i|)`.
pub fn max_rel_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    assert!(analytic.same_shape(numeric), "gradient shape mismatch");
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| (a - n).abs() / (a.abs() + n.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

/// Runs the finite-difference oracle against an analytic gradient with the
/// standard step `h = 1e-3` and returns the max relative error.
pub fn grad_check<F>(f: F, x: &Tensor, analytic: &Tensor) -> f64
where
    F: Fn(&Tensor) -> f64 + Sync,
{
    let numeric = finite_difference(f, x, FD_STEP);
    max_rel_error(analytic, &numeric)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_function_checks_to_roundoff() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::uniform(&[10], 2.0, &mut rng);
        let analytic = Tensor::filled(&[10], 1.0);
        let err = grad_check(|t| t.data().iter().sum(), &x, &analytic);
        assert!(err < 1e-9, "err = {err}");
    }

    #[test]
    fn planted_factor_two_bug_is_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor::uniform(&[6], 1.0, &mut rng);
        // Claimed gradient of sum(x) off by a factor of two.
        let wrong = Tensor::filled(&[6], 2.0);
        let err = grad_check(|t| t.data().iter().sum(), &x, &wrong);
        assert!((err - 1.0 / 3.0).abs() < 1e-6, "err = {err}");
    }

    #[test]
    fn quadratic_function_within_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::uniform(&[8], 1.5, &mut rng);
        let analytic = Tensor::new(vec![8], x.data().iter().map(|v| 2.0 * v).collect()).unwrap();
        let err = grad_check(|t| t.data().iter().map(|v| v * v).sum(), &x, &analytic);
        assert!(err < 1e-4, "err = {err}");
    }
}
