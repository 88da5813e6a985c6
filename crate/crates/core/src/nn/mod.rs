//! Dense network substrate: matrices, MLPs with an exact reverse pass, Adam
//! and checkpoint persistence.

pub mod adam;
pub mod checkpoint;
pub mod matrix;
pub mod mlp;
pub mod scalar;

pub use adam::AdamState;
pub use matrix::Matrix;
pub use mlp::{Mlp, MlpGrads, MlpSpec, OutputActivation, ParamSet, Tape};
pub use scalar::{gelu, relu, sigmoid, softplus, tanh, Scalar};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent, reproducible RNG stream `stream` under a run seed.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A network bundled with its optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct Trainable<T> {
    pub net: Mlp<T>,
    pub adam: AdamState<T>,
}

impl<T: Scalar> Trainable<T> {
    pub fn new(net: Mlp<T>, learning_rate: f64) -> Self {
        let adam = AdamState::new(net.params.len(), learning_rate);
        Trainable { net, adam }
    }

    pub fn step(&mut self, gradient: &[T]) -> crate::Result<()> {
        self.adam.step(&mut self.net.params, gradient)
    }
}

/// A small trainable vector (mixing weight, log-std) with its own optimizer.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainableVec<T> {
    pub params: ParamSet<T>,
    pub adam: AdamState<T>,
}

impl<T: Scalar> TrainableVec<T> {
    pub fn new(values: Vec<T>, learning_rate: f64) -> Self {
        let adam = AdamState::new(values.len(), learning_rate);
        TrainableVec { params: ParamSet::new(values), adam }
    }

    pub fn step(&mut self, gradient: &[T]) -> crate::Result<()> {
        self.adam.step(&mut self.params, gradient)
    }
}
