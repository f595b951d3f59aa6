//! RMSprop.

use crate::layers::Param;
use crate::tensor::Scalar;

pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;
pub const DEFAULT_RHO: f64 = 0.9;
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// cache ← ρ·cache + (1−ρ)·g², then θ ← θ − lr·g / (√cache + ε).
/// ε sits outside the square root.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp<T> {
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
    /// One accumulator per parameter tensor, created on the first step.
    pub cache: Vec<Vec<T>>,
}

impl<T: Scalar> Default for RmsProp<T> {
    fn default() -> Self {
        RmsProp::new(DEFAULT_LEARNING_RATE, DEFAULT_RHO, DEFAULT_EPSILON)
    }
}

impl<T: Scalar> RmsProp<T> {
    pub fn new(lr: f64, rho: f64, eps: f64) -> RmsProp<T> {
        RmsProp {
            lr,
            rho,
            eps,
            cache: Vec::new(),
        }
    }

    /// Apply one update using each parameter's accumulated gradient. The
    /// parameter list must come in the same order on every call.
    pub fn step(&mut self, params: &mut [&mut Param<T>]) {
        if self.cache.is_empty() {
            self.cache = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
        }
        assert_eq!(self.cache.len(), params.len(), "parameter list changed between steps");
        let (lr, rho, eps) = (T::of(self.lr), T::of(self.rho), T::of(self.eps));
        let keep = T::one() - rho;
        for (p, cache) in params.iter_mut().zip(self.cache.iter_mut()) {
            for ((v, &g), c) in p.value.iter_mut().zip(&p.grad).zip(cache.iter_mut()) {
                *c = rho * *c + keep * g * g;
                *v = *v - lr * g / (c.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn param(values: &[f64], grads: &[f64]) -> Param<f64> {
        Param {
            shape: vec![values.len()],
            value: values.to_vec(),
            grad: grads.to_vec(),
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = param(&[1.0, -2.0], &[0.0, 0.0]);
        let mut opt = RmsProp::default();
        for _ in 0..5 {
            opt.step(&mut [&mut p]);
        }
        assert_eq!(p.value, vec![1.0, -2.0]);
    }

    #[test]
    fn first_step_size() {
        for g in [3.0, -0.25, 1e-3] {
            let mut p = param(&[0.0], &[g]);
            let mut opt = RmsProp::default();
            opt.step(&mut [&mut p]);
            let want = -1e-3 * g / ((0.1 * g * g).sqrt() + 1e-8);
            assert!((p.value[0] - want).abs() < 1e-18);
            if g.abs() > 0.1 {
                let approx = -1e-3 * g.signum() / 0.1f64.sqrt();
                assert!((p.value[0] - approx).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn epsilon_outside_sqrt() {
        // ε inside the root would give a step near 1e-4 here
        let mut p = param(&[0.0], &[1e-8]);
        let mut opt = RmsProp::new(1.0, 0.0, 1e-8);
        opt.step(&mut [&mut p]);
        assert!((p.value[0] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn cache_stays_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut p = param(&[0.0; 8], &[0.0; 8]);
        let mut opt = RmsProp::default();
        for _ in 0..1000 {
            p.grad.iter_mut().for_each(|g| *g = rng.gen_range(-100.0..100.0));
            opt.step(&mut [&mut p]);
            assert!(opt.cache[0].iter().all(|c| *c >= 0.0));
        }
        assert!(p.value.iter().all(|v| v.is_finite()));
    }
}
