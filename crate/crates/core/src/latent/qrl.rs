//! Constrained quasimetric objective: observed transitions are held to a
//! distance of at most one (plus margin) while random pairs are pushed apart
//! through a softplus transform, with a projected dual ascent on the
//! constraint multiplier.

use crate::error::{Error, Result};
use crate::nn::{sigmoid, softplus, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub struct DistDuals {
    pub lambda_dist: f64,
    /// Slack on the local constraint.
    pub margin: f64,
    /// Softplus offset.
    pub mu: f64,
    /// Softplus scale.
    pub sigma: f64,
    /// Distances above this are dropped from planning graphs.
    pub dist_cap: f64,
    pub dual_lr: f64,
    pub lambda_max: f64,
}

impl Default for DistDuals {
    fn default() -> Self {
        DistDuals {
            lambda_dist: 1.0,
            margin: 0.25,
            mu: 500.0,
            sigma: 0.1,
            dist_cap: 100.0,
            dual_lr: 1e-3,
            lambda_max: 1e6,
        }
    }
}

/// `relu(d - 1)^2 - margin^2`.
pub fn loss_close<T: Scalar>(d: T, margin: T) -> T {
    let over = (d - T::one()).max(T::zero());
    over * over - margin * margin
}

pub fn loss_close_grad<T: Scalar>(d: T) -> T {
    T::lit(2.0) * (d - T::one()).max(T::zero())
}

/// `sigma * softplus((mu - d) / sigma)`: decreasing in `d`, so adding it to
/// the loss pushes random pairs apart until they approach `mu`.
pub fn loss_far<T: Scalar>(d: T, mu: T, sigma: T) -> T {
    sigma * softplus((mu - d) / sigma)
}

pub fn loss_far_grad<T: Scalar>(d: T, mu: T, sigma: T) -> T {
    -sigmoid((mu - d) / sigma)
}

#[derive(Clone, Debug, PartialEq)]
pub struct QrlStep<T> {
    /// `lambda * mean(loss_close) + mean(loss_far)` at the current multiplier.
    pub loss: T,
    pub mean_close: f64,
    pub mean_far: f64,
    /// Gradient of `loss` with respect to each successor distance.
    pub grad_close: Vec<T>,
    /// Gradient of `loss` with respect to each random-pair distance.
    pub grad_far: Vec<T>,
    pub lambda_next: f64,
}

/// Primal loss and gradients at the current multiplier, and the projected
/// dual ascent step `lambda + dual_lr * mean(loss_close)` clamped to
/// `[0, lambda_max]`.
pub fn qrl_step<T: Scalar>(d_successor: &[T], d_random: &[T], duals: &DistDuals) -> Result<QrlStep<T>> {
    if d_successor.is_empty() || d_random.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let (margin, mu, sigma) = (T::lit(duals.margin), T::lit(duals.mu), T::lit(duals.sigma));
    let lambda = T::lit(duals.lambda_dist);
    let nc = d_successor.len() as f64;
    let nf = d_random.len() as f64;
    let mean_close = d_successor.iter().map(|&d| loss_close(d, margin).as_f64()).sum::<f64>() / nc;
    let mean_far = d_random.iter().map(|&d| loss_far(d, mu, sigma).as_f64()).sum::<f64>() / nf;
    let grad_close = d_successor.iter().map(|&d| lambda * loss_close_grad(d) / T::lit(nc)).collect();
    let grad_far = d_random.iter().map(|&d| loss_far_grad(d, mu, sigma) / T::lit(nf)).collect();
    let lambda_next = (duals.lambda_dist + duals.dual_lr * mean_close).clamp(0.0, duals.lambda_max);
    Ok(QrlStep {
        loss: T::lit(duals.lambda_dist * mean_close + mean_far),
        mean_close,
        mean_far,
        grad_close,
        grad_far,
        lambda_next,
    })
}
