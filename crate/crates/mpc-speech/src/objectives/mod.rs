//! The three self-supervised objectives: masked reconstruction on stacked
//! frames, shifted autoregressive L1, and contrastive future prediction.

mod apc;
mod cpc;
mod mask;
mod mpc;

pub use apc::{apc_loss, apc_loss_node, DEFAULT_STEP_AHEAD};
pub use cpc::{cpc_infonce_loss, cpc_infonce_node};
pub use mask::{apply_mask, sample_mask_plan, MaskAction, MaskPlan, MaskPolicy, PredictiveTargets};
pub use mpc::{mpc_loss, mpc_loss_node};

#[derive(Debug, thiserror::Error)]
pub enum ObjectiveError {
    #[error("mask plan covers {plan} positions but the sequence has {frames}")]
    PlanLengthMismatch { plan: usize, frames: usize },
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },
    #[error("prediction shift n={n} must satisfy 1 <= n < T={t}")]
    ShiftTooLarge { n: usize, t: usize },
    #[error("contrastive loss needs at least 2 candidates, got {n}")]
    TooFewCandidates { n: usize },
    #[error("invalid masking policy: {0}")]
    BadPolicy(String),
}
