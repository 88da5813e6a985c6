//! In-distribution classifier over latents, trained against synthetic
//! negatives made by interpolating and extrapolating dataset states.

use rand::{Rng, RngCore};

use crate::latent::{encode_matrix, LATENT_DIM};
use crate::maze::Observation;
use crate::nn::{Matrix, Mlp, MlpSpec, OutputActivation};
use crate::{Error, Result};

pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq)]
pub struct OodDuals {
    pub lambda_ood: f64,
    /// Allowed shortfall of the mean positive confidence below one.
    pub delta: f64,
    pub dual_lr: f64,
    pub lambda_max: f64,
}

impl Default for OodDuals {
    fn default() -> Self {
        OodDuals { lambda_ood: 1.0, delta: 0.1, dual_lr: 1e-3, lambda_max: 1e6 }
    }
}

/// Classifier architecture: latent in, probability out.
pub fn psi_spec(hidden_sizes: Vec<usize>) -> MlpSpec {
    MlpSpec {
        input_dim: LATENT_DIM,
        hidden_sizes,
        output_dim: 1,
        use_residual: true,
        use_layer_norm: true,
        dropout_rate: 0.0,
        output_activation: OutputActivation::Sigmoid,
    }
}

/// `(1 - alpha) s1 + alpha s2` and `(1 + beta) s1 - beta s2`.
pub fn make_negatives_with(s1: &Observation, s2: &Observation, alpha: f32, beta: f32) -> (Observation, Observation) {
    let mut c = [0.0; 4];
    let mut e = [0.0; 4];
    for j in 0..4 {
        c[j] = (1.0 - alpha) * s1[j] + alpha * s2[j];
        e[j] = (1.0 + beta) * s1[j] - beta * s2[j];
    }
    (c, e)
}

pub fn make_negatives(s1: &Observation, s2: &Observation, rng: &mut dyn RngCore) -> (Observation, Observation) {
    let alpha: f32 = rng.gen();
    let beta: f32 = rng.gen();
    make_negatives_with(s1, s2, alpha, beta)
}

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Batch mean of `-lambda log psi_z - log(1 - psi_c) - log(1 - psi_e)`.
pub fn ood_loss(psi_z: &[f64], psi_c: &[f64], psi_e: &[f64], lambda_ood: f64) -> Result<f64> {
    let n = psi_z.len();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    if psi_c.len() != n || psi_e.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: psi_c.len().min(psi_e.len()) });
    }
    let total: f64 = (0..n)
        .map(|i| -lambda_ood * clamp(psi_z[i]).ln() - (1.0 - clamp(psi_c[i])).ln() - (1.0 - clamp(psi_e[i])).ln())
        .sum();
    Ok(total / n as f64)
}

/// Gradients of `ood_loss` with respect to the classifier logits of the
/// positives and of the negatives. Uses the unclamped closed forms so a
/// saturated output still receives a signal.
pub fn ood_logit_grads(psi_z: &[f64], psi_neg: &[f64], lambda_ood: f64) -> (Vec<f64>, Vec<f64>) {
    let n = psi_z.len() as f64;
    let pos = psi_z.iter().map(|&p| -lambda_ood * (1.0 - p) / n).collect();
    let neg = psi_neg.iter().map(|&p| p / n).collect();
    (pos, neg)
}

/// Projected ascent on the positive-confidence constraint.
pub fn dual_update_ood(mean_psi_positive: f64, duals: &OodDuals) -> f64 {
    let residual = (1.0 - duals.delta) - mean_psi_positive;
    (duals.lambda_ood + duals.dual_lr * residual).clamp(0.0, duals.lambda_max)
}

/// In-distribution probability for each latent row.
pub fn classify_latents(psi: &Mlp<f32>, z: &Matrix<f32>) -> Result<Vec<f64>> {
    let out = psi.infer(z)?;
    Ok(out.as_slice().iter().map(|&p| p as f64).collect())
}

pub fn classify_observations(phi: &Mlp<f32>, psi: &Mlp<f32>, obs: &[Observation]) -> Result<Vec<f64>> {
    classify_latents(psi, &encode_matrix(phi, obs)?)
}
