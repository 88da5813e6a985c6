//! Learnable anchor points in observation space. Anchors repel each other
//! under the learned quasimetric and are held inside the data support by a
//! log barrier on the classifier, with the networks themselves frozen.

use std::io::Write;

use rand::seq::index::sample;
use rand::RngCore;

use crate::latent::{encode_matrix, QuasimetricHead};
use crate::maze::{Dataset, Observation};
use crate::nn::{Matrix, Mlp, TrainableVec};
use crate::ood::{dual_update_ood, OodDuals, PROB_CLAMP};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct KeypointConfig {
    pub count: usize,
    /// Anchors stay fixed for step indices below this.
    pub frozen_until: u64,
    pub lambda_repel: f64,
    pub eps_repel: f64,
    /// Pairs further apart than this do not repel.
    pub repel_range: f64,
    pub learning_rate: f64,
    pub barrier: OodDuals,
}

impl Default for KeypointConfig {
    fn default() -> Self {
        KeypointConfig {
            count: 100,
            frozen_until: 100_000,
            lambda_repel: 100.0,
            eps_repel: 1e-2,
            repel_range: 100.0,
            learning_rate: 3e-4,
            barrier: OodDuals::default(),
        }
    }
}

/// Anchor positions (velocity is pinned to zero) and their cached latents.
#[derive(Clone, Debug, PartialEq)]
pub struct KeypointSet {
    pub config: KeypointConfig,
    /// `K * 2` positions with their optimizer.
    pub positions: TrainableVec<f32>,
    pub latents: Matrix<f32>,
}

/// Energy of one keypoint update.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KpsReport {
    pub updated: bool,
    pub repel: f64,
    pub barrier: f64,
    pub mean_psi: f64,
    pub lambda_barrier: f64,
}

/// `K` distinct dataset states, sampled without replacement.
pub fn init_keypoints(dataset: &Dataset, config: KeypointConfig, rng: &mut dyn RngCore) -> Result<KeypointSet> {
    let (k, n) = (config.count, dataset.len());
    if k == 0 {
        return Err(Error::InvalidArgument("keypoint count must be positive".into()));
    }
    if k > n {
        return Err(Error::TooManyKeypoints { requested: k, available: n });
    }
    let mut positions = Vec::with_capacity(2 * k);
    for i in sample(rng, n, k) {
        let s = dataset.transitions()[i].state;
        positions.extend([s[0], s[1]]);
    }
    let lr = config.learning_rate;
    Ok(KeypointSet { config, positions: TrainableVec::new(positions, lr), latents: Matrix::zeros(k, 0) })
}

impl KeypointSet {
    pub fn len(&self) -> usize {
        self.config.count
    }

    pub fn is_empty(&self) -> bool {
        self.config.count == 0
    }

    pub fn anchor(&self, k: usize) -> Observation {
        let p = self.positions.params.values();
        [p[2 * k], p[2 * k + 1], 0.0, 0.0]
    }

    pub fn anchors(&self) -> Vec<Observation> {
        (0..self.len()).map(|k| self.anchor(k)).collect()
    }

    /// Recomputes the cached latents after the anchors or the encoder changed.
    pub fn refresh(&mut self, phi: &Mlp<f32>) -> Result<()> {
        self.latents = encode_matrix(phi, &self.anchors())?;
        Ok(())
    }

    /// One descent step on repulsion plus barrier, with gradients through the
    /// frozen encoder. No-op inside the freeze window.
    pub fn step(
        &mut self,
        phi: &Mlp<f32>,
        head: &QuasimetricHead<f32>,
        psi: &Mlp<f32>,
        step_idx: u64,
    ) -> Result<KpsReport> {
        if step_idx < self.config.frozen_until {
            return Ok(KpsReport { lambda_barrier: self.config.barrier.lambda_ood, ..KpsReport::default() });
        }
        let k = self.len();
        let obs = crate::latent::observations_matrix(&self.anchors());
        let (z, phi_tape) = phi.forward(&obs, None)?;
        let (e, head_tape) = head.embedder.forward(&z, None)?;
        let c = &self.config;
        let (lambda, eps, range) = (c.lambda_repel, c.eps_repel, c.repel_range);
        let (dist, ge, _) = head.matrix_value_backward(&e, |d| {
            let d = d as f64;
            if d > range {
                0.0
            } else {
                (-lambda / ((d + eps) * (d + eps))) as f32
            }
        });
        let (repel, _) = repel_energy(&dist, k, lambda, eps, range);
        let mut gz = head.embedder.backward(&head_tape, &ge)?.input;

        let (p, psi_tape) = psi.forward(&z, None)?;
        let probs: Vec<f64> = p.as_slice().iter().map(|&v| v as f64).collect();
        let lambda = c.barrier.lambda_ood;
        let barrier = barrier_loss(&probs, lambda);
        let dlogit = Matrix::from_vec(k, 1, probs.iter().map(|&q| (-lambda * (1.0 - q)) as f32).collect());
        gz.add_assign(&psi.backward_logits(&psi_tape, &dlogit)?.input);

        let gobs = phi.backward(&phi_tape, &gz)?.input;
        let grad: Vec<f32> = (0..k).flat_map(|i| [gobs.get(i, 0), gobs.get(i, 1)]).collect();
        if !grad.iter().all(|g| g.is_finite()) || !repel.is_finite() || !barrier.is_finite() {
            return Err(Error::NonFinite("keypoint loss"));
        }
        self.positions.step(&grad)?;
        let mean_psi = probs.iter().sum::<f64>() / k as f64;
        self.config.barrier.lambda_ood = dual_update_ood(mean_psi, &self.config.barrier);
        self.refresh(phi)?;
        Ok(KpsReport { updated: true, repel, barrier, mean_psi, lambda_barrier: self.config.barrier.lambda_ood })
    }

    /// `k,x,y,psi` rows.
    pub fn write_csv(&self, psi: &Mlp<f32>, out: &mut impl Write) -> Result<()> {
        let probs = crate::ood::classify_latents(psi, &self.latents)?;
        writeln!(out, "k,x,y,psi")?;
        for (k, p) in probs.iter().enumerate() {
            let a = self.anchor(k);
            writeln!(out, "{k},{},{},{p}", a[0], a[1])?;
        }
        Ok(())
    }
}

/// `lambda * sum_{i != j} 1 / (d_ij + eps)` over a row-major `k * k` distance
/// matrix, skipping pairs beyond `range`. Also returns `dE/dd_ij`.
pub fn repel_energy(dist: &[f32], k: usize, lambda: f64, eps: f64, range: f64) -> (f64, Vec<f32>) {
    let mut energy = 0.0;
    let mut grad = vec![0.0f32; k * k];
    for i in 0..k {
        for j in 0..k {
            let d = dist[i * k + j] as f64;
            if i == j || d > range {
                continue;
            }
            energy += lambda / (d + eps);
            grad[i * k + j] = (-lambda / ((d + eps) * (d + eps))) as f32;
        }
    }
    (energy, grad)
}

/// Repulsion energy of a set of latents under the learned quasimetric.
pub fn repel_loss(latents: &Matrix<f32>, head: &QuasimetricHead<f32>, config: &KeypointConfig) -> Result<f64> {
    let e = head.embed(latents)?;
    let dist = head.distance_matrix(&e);
    Ok(repel_energy(&dist, latents.rows(), config.lambda_repel, config.eps_repel, config.repel_range).0)
}

/// `-lambda * sum_k log psi_k`.
pub fn barrier_loss(psi: &[f64], lambda: f64) -> f64 {
    -lambda * psi.iter().map(|&p| p.clamp(PROB_CLAMP, 1.0).ln()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repel_examples() {
        let (e, _) = repel_energy(&[0.0, 1.0, 1.0, 0.0], 2, 1.0, 0.0, 100.0);
        assert_eq!(e, 2.0);
        let (e, _) = repel_energy(&[0.0, 0.0, 0.0, 0.0], 2, 1.0, 1e-3, 100.0);
        assert!((e - 2000.0).abs() < 1e-9);
        assert_eq!(repel_energy(&[0.0], 1, 100.0, 1e-2, 100.0).0, 0.0);
        let (e, g) = repel_energy(&[0.0, 150.0, 50.0, 0.0], 2, 1.0, 0.0, 100.0);
        assert_eq!(e, 1.0 / 50.0);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn barrier_examples() {
        assert_eq!(barrier_loss(&[1.0; 5], 1.0), 0.0);
        let one = barrier_loss(&[(-1.0f64).exp(), 1.0, 1.0], 1.0);
        assert!((one - 1.0).abs() < 1e-12);
        assert!((barrier_loss(&[0.3, 0.8], 2.0) - 2.0 * barrier_loss(&[0.3, 0.8], 1.0)).abs() < 1e-12);
        assert!(barrier_loss(&[0.0], 1.0).is_finite());
    }
}
