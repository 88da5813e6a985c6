//! Goal-conditioned Gaussian policy trained by advantage-weighted regression
//! on quasimetric distance improvement.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Geometric, StandardNormal};

use crate::latent::LATENT_DIM;
use crate::maze::{Dataset, Observation};
use crate::nn::{Matrix, Mlp, MlpSpec, OutputActivation, Scalar};
use crate::{Error, Result};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
pub const ACTION_DIM: usize = 2;
/// Per-step continuation probability of hindsight goal offsets.
pub const GOAL_CONTINUATION: f64 = 0.99;

pub fn policy_spec(hidden_sizes: Vec<usize>, dropout_rate: f64) -> MlpSpec {
    MlpSpec {
        input_dim: 4 + LATENT_DIM,
        hidden_sizes,
        output_dim: ACTION_DIM,
        use_residual: true,
        use_layer_norm: false,
        dropout_rate,
        output_activation: OutputActivation::TanhMean,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyHead<T> {
    pub net: Mlp<T>,
    /// State-independent, clamped on use.
    pub log_std: Vec<T>,
    pub temperature: f64,
    pub max_weight: f64,
}

#[derive(Clone, Debug)]
pub struct AwrOutput<T> {
    pub loss: T,
    pub net: Vec<T>,
    pub log_std: Vec<T>,
    pub mean_weight: f64,
}

impl<T: Scalar> PolicyHead<T> {
    pub fn new(net: Mlp<T>) -> Self {
        PolicyHead { net, log_std: vec![T::zero(); ACTION_DIM], temperature: 5.0, max_weight: 100.0 }
    }

    pub fn clamped_log_std(&self) -> Vec<T> {
        self.log_std.iter().map(|&l| l.max(T::lit(LOG_STD_MIN)).min(T::lit(LOG_STD_MAX))).collect()
    }

    /// `min(exp(temperature * A), max_weight)`.
    pub fn weight(&self, advantage: f64) -> f64 {
        (self.temperature * advantage).exp().min(self.max_weight)
    }

    /// Mean over the batch of `w_i * -log N(a_i; mu(s_i, g_i), sigma)`.
    /// `inputs` rows are observation followed by goal latent.
    pub fn awr_loss(
        &self,
        inputs: &Matrix<T>,
        actions: &Matrix<T>,
        weights: &[f64],
        train_rng: Option<&mut dyn RngCore>,
    ) -> Result<AwrOutput<T>> {
        let b = inputs.rows();
        if b == 0 {
            return Err(Error::EmptyBatch);
        }
        if actions.rows() != b || actions.cols() != ACTION_DIM || weights.len() != b {
            return Err(Error::DimensionMismatch { expected: b, got: actions.rows().min(weights.len()) });
        }
        let (mu, tape) = self.net.forward(inputs, train_rng)?;
        let log_std = self.clamped_log_std();
        let half_log_2pi = T::lit(0.5 * (2.0 * std::f64::consts::PI).ln());
        let inv_var: Vec<T> = log_std.iter().map(|&l| (T::lit(-2.0) * l).exp()).collect();
        let inv_b = T::lit(1.0 / b as f64);
        let mut loss = T::zero();
        let mut dmu = Matrix::zeros(b, ACTION_DIM);
        let mut dlog = vec![T::zero(); ACTION_DIM];
        for i in 0..b {
            let w = T::lit(weights[i]);
            for j in 0..ACTION_DIM {
                let r = actions.get(i, j) - mu.get(i, j);
                let z2 = r * r * inv_var[j];
                loss += w * (T::lit(0.5) * z2 + log_std[j] + half_log_2pi) * inv_b;
                dmu.set(i, j, -w * r * inv_var[j] * inv_b);
                dlog[j] += w * (T::one() - z2) * inv_b;
            }
        }
        for (g, &raw) in dlog.iter_mut().zip(&self.log_std) {
            if raw < T::lit(LOG_STD_MIN) || raw > T::lit(LOG_STD_MAX) {
                *g = T::zero();
            }
        }
        let grads = self.net.backward(&tape, &dmu)?;
        let mean_weight = weights.iter().sum::<f64>() / b as f64;
        Ok(AwrOutput { loss, net: grads.params, log_std: dlog, mean_weight })
    }
}

impl PolicyHead<f32> {
    /// Tanh mean, or mean plus Gaussian noise clamped to the action box.
    pub fn act(&self, s: &Observation, z_target: &[f32], deterministic: bool, rng: &mut dyn RngCore) -> Result<[f32; 2]> {
        if z_target.len() != LATENT_DIM {
            return Err(Error::DimensionMismatch { expected: LATENT_DIM, got: z_target.len() });
        }
        let mut row = s.to_vec();
        row.extend_from_slice(z_target);
        let mu = self.net.infer(&Matrix::from_vec(1, row.len(), row))?;
        let mut a = [mu.get(0, 0), mu.get(0, 1)];
        if !deterministic {
            for (v, l) in a.iter_mut().zip(self.clamped_log_std()) {
                let n: f32 = StandardNormal.sample(rng);
                *v = (*v + l.exp() * n).clamp(-1.0, 1.0);
            }
        }
        Ok(a)
    }
}

/// `d(s, g) - d(s', g)`: positive when the transition moves toward the goal.
pub fn advantage(d_sg: f64, d_next_g: f64) -> f64 {
    d_sg - d_next_g
}

/// Goal offset `Delta >= 1` with `P(Delta = k) = (1 - c) c^(k - 1)`.
pub fn sample_goal_offset(rng: &mut dyn RngCore) -> u64 {
    let geo = Geometric::new(1.0 - GOAL_CONTINUATION).expect("valid probability");
    1 + geo.sample(rng)
}

/// State `offset` steps after transition `index` within its trajectory,
/// truncated at the trajectory's final state.
pub fn goal_at_offset(dataset: &Dataset, index: usize, offset: u64) -> Observation {
    let range = dataset.trajectory_range(dataset.trajectory_of(index));
    let t = dataset.transitions();
    let target = index as u64 + offset;
    if target < range.end as u64 {
        t[target as usize].state
    } else {
        t[range.end - 1].next_state
    }
}

pub fn sample_actor_goal(dataset: &Dataset, index: usize, rng: &mut dyn RngCore) -> Observation {
    let offset = sample_goal_offset(rng);
    goal_at_offset(dataset, index, offset)
}

/// Uniform action in the action box, for baselines.
pub fn random_action(rng: &mut dyn RngCore) -> [f32; 2] {
    [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)]
}
