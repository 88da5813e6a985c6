//! Training, evaluation and map emission.

pub mod config;
pub mod eval;
pub mod maps;
pub mod model;
pub mod train;

pub use config::TrainConfig;
pub use eval::{evaluate, evaluate_checkpoint, EvalOptions, EvalResult};
pub use maps::{emit_maps, plan_dump, MapImage};
pub use model::Model;
pub use train::{train, EvalSummary, RunReport, StepLog, Trainer};
