pub mod actor;
pub(crate) mod codec;
pub mod error;
pub mod keypoints;
pub mod latent;
pub mod maze;
pub mod nn;
pub mod ood;
pub mod orchestrator;
pub mod planner;

pub use error::{Error, Result};
