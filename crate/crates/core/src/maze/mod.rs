//! Deterministic 2D point-mass mazes, a scripted expert and offline dataset
//! generation.

pub mod dataset;
pub mod env;
pub mod expert;
pub mod layout;

pub use dataset::{generate_dataset, Dataset, Style, Transition};
pub use env::{goal_reached, step, EnvState, Observation};
pub use expert::Expert;
pub use layout::{Cell, CellIdx, MazeLayout};
