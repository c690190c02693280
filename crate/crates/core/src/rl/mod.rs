//! Trajectory flattening, advantage estimation, clipped policy updates and
//! the training loop.

pub mod buffer;
pub mod gae;
pub mod metrics;
pub mod ppo;
pub mod train;

use thiserror::Error;

pub use buffer::{annotate, flatten, ExperienceBuffer, Transition};
pub use gae::{compute_gae, AdvantageConfig};
pub use metrics::{behavior_metrics, csv_header, csv_row, EvaluatedTrajectory, MetricsRecord};
pub use ppo::{
    clipped_objective, ppo_update, surrogate_gradient, surrogate_objective, value_gradient, value_loss, Adam,
    Optimizers, PolicySample, PpoConfig, PpoStats,
};
pub use train::{evaluate, sweep, train, MetricsRow, TrainConfig, TrainReport};

use crate::engine::EngineError;
use crate::reward::RewardError;

#[derive(Debug, Error)]
pub enum RlError {
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("rewards misaligned with steps: {0}")]
    Misalignment(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Reward(#[from] RewardError),
}
