//! Decoding and scoring: CTC prefix scores, joint beam search, and character
//! error rate.

mod beam;
mod cer;
mod ctc_prefix;
mod report;

pub use beam::{joint_beam_decode, DecodeConfig, Hypothesis};
pub use cer::{cer, edit_counts, EditCounts};
pub use ctc_prefix::{ctc_prefix_score, ctc_sequence_score, CtcScorer, PrefixState};
pub use report::{EvalReport, UtteranceResult};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("invalid decode configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}
