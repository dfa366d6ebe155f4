//! The models: Transformer encoder with mode-dependent downsampling, FBANK
//! reconstruction head, Transformer decoder, CTC head, and the recurrent
//! context encoder behind the autoregressive and contrastive objectives.

mod checkpoint;
mod config;
mod ctc;
mod decoder;
mod encoder;
mod params;
mod recurrent;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{EncoderConfig, ModelConfig, Vocab};
pub use ctc::{ctc_log_probs, ctc_loss, ctc_loss_node, ctc_min_frames};
pub use decoder::decoder_forward;
pub use encoder::{
    causal_mask, dropout, encoder_forward, multi_head_attention, reconstruction_head,
    sinusoidal_positions, EncoderMode,
};
pub use params::{
    bind_all, init_apc, init_cpc, init_finetune_model, init_finetune_random, init_mpc_pretrain,
    mpc_pretrain_param_count, xavier, BoundParams, ModelParams,
};
pub use recurrent::gru_forward;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("{mode:?} encoder expects input width {expected}, got {got}")]
    WrongInputDim { mode: EncoderMode, expected: usize, got: usize },
    #[error("decoder prefix must begin with the start symbol")]
    PrefixMissingSos,
    #[error("token id {id} out of vocabulary (size {vocab_size})")]
    OovToken { id: usize, vocab_size: usize },
    #[error("transcript character {character:?} is not in the vocabulary")]
    OovCharacter { character: char },
    #[error("{labels} labels need more than {frames} frames (minimum {min_frames})")]
    CtcInfeasible { frames: usize, min_frames: usize, labels: usize },
    #[error("parameter transfer failed: {details}")]
    TransferMismatch { details: String },
    #[error("checkpoint {path}: {detail}")]
    CheckpointFormat { path: String, detail: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid model configuration: {0}")]
    Config(String),
}
