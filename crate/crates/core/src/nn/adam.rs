//! Adam with bias correction.

use super::mlp::ParamSet;
use super::scalar::Scalar;
use crate::error::{Error, Result};

pub const DEFAULT_LEARNING_RATE: f64 = 3e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub first_moment: Vec<T>,
    pub second_moment: Vec<T>,
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(len: usize, learning_rate: f64) -> Self {
        AdamState {
            first_moment: vec![T::zero(); len],
            second_moment: vec![T::zero(); len],
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One descent step. A non-finite gradient is rejected and leaves both the
    /// parameters and the moments untouched.
    pub fn step(&mut self, params: &mut ParamSet<T>, gradient: &[T]) -> Result<()> {
        if gradient.len() != params.len() || self.first_moment.len() != params.len() {
            return Err(Error::DimensionMismatch { expected: params.len(), got: gradient.len() });
        }
        if gradient.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        // lr * mhat / (sqrt(vhat) + eps) folded into one scale on m and v
        let step_size = T::lit(self.learning_rate / c1);
        let inv_c2 = T::lit(1.0 / c2);
        let eps = T::lit(self.eps);
        let values = params.values_mut();
        for (((p, &g), m), v) in values
            .iter_mut()
            .zip(gradient)
            .zip(self.first_moment.iter_mut())
            .zip(self.second_moment.iter_mut())
        {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            *p -= step_size * *m / ((*v * inv_c2).sqrt() + eps);
        }
        Ok(())
    }
}
