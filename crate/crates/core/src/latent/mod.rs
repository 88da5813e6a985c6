//! Latent geometry: the observation encoder, the interval quasimetric head
//! and the regularizers used to train them.

pub mod iqe;
pub mod qrl;
pub mod vicreg;

pub use iqe::{interval_union_measure, maxmean, PairGrads, QuasimetricHead, COMPONENT_SIZE, N_COMPONENTS};
pub use qrl::{loss_close, loss_far, qrl_step, DistDuals, QrlStep};
pub use vicreg::{covariance, vicreg_covariance, vicreg_variance};

use crate::error::{Error, Result};
use crate::maze::Observation;
use crate::nn::{Matrix, Mlp};

pub const LATENT_DIM: usize = 16;

/// An encoded observation.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentPoint(Vec<f32>);

impl LatentPoint {
    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.0
    }
}

pub fn observations_matrix(obs: &[Observation]) -> Matrix<f32> {
    Matrix::from_vec(obs.len(), 4, obs.iter().flatten().copied().collect())
}

/// Eval-mode encoding of a single observation.
pub fn encode(phi: &Mlp<f32>, s: &Observation) -> Result<LatentPoint> {
    Ok(encode_batch(phi, std::slice::from_ref(s))?.pop().expect("one row"))
}

pub fn encode_batch(phi: &Mlp<f32>, obs: &[Observation]) -> Result<Vec<LatentPoint>> {
    let z = encode_matrix(phi, obs)?;
    Ok((0..z.rows()).map(|i| LatentPoint(z.row(i).to_vec())).collect())
}

pub fn encode_matrix(phi: &Mlp<f32>, obs: &[Observation]) -> Result<Matrix<f32>> {
    if phi.spec.output_dim != LATENT_DIM {
        return Err(Error::DimensionMismatch { expected: LATENT_DIM, got: phi.spec.output_dim });
    }
    let z = phi.infer(&observations_matrix(obs))?;
    if !z.is_finite() {
        return Err(Error::NonFinite("latent"));
    }
    Ok(z)
}
