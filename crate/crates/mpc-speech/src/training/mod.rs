//! Optimization and the two training loops: Adam under the warmup schedule
//! with plateau decay, scheduled sampling, deterministic batching, and
//! checkpoint selection.

mod adam;
mod config;
mod data;
mod finetune;
mod metrics;
mod plateau;
mod pretrain;
mod sampling;
mod schedule;

pub use adam::{adam_step, clip_global_norm, AdamState};
pub use config::{Objective, RunConfig};
pub use data::{is_validation_utterance, join_labeled, make_batches, split_train_val, Utterance};
pub use finetune::{finetune, validation_loss, FinetuneOutcome};
pub use metrics::{MetricsLog, MetricsRecord};
pub use plateau::{plateau_update, PlateauDecision, PlateauState};
pub use pretrain::{pretrain, PretrainOutcome};
pub use sampling::scheduled_sample;
pub use schedule::{lr_at_step, ScheduleConfig};

/// Optimizer moments, plateau state, and counters for one training run.
#[derive(Clone, Debug, Default)]
pub struct TrainState {
    pub adam: AdamState,
    pub plateau: PlateauState,
    pub lr_factor: f64,
    pub epoch: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("non-finite gradient for parameter {param}")]
    NonFiniteGradient { param: String },
    #[error("data error: {0}")]
    Data(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Objective(#[from] crate::objectives::ObjectiveError),
    #[error(transparent)]
    Numerics(#[from] crate::numerics::NumericsError),
    #[error(transparent)]
    Audio(#[from] crate::features::AudioError),
}
