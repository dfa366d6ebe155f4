//! Masked predictive coding pre-training for Transformer speech encoders.
//!
//! This crate implements the full desk-scale pipeline: FBANK feature
//! extraction from WAV audio, three self-supervised pre-training objectives
//! (masked reconstruction, autoregressive prediction, contrastive prediction),
//! a Transformer encoder/decoder with a CTC head, the warmup-and-plateau
//! training schedule, and CTC/attention joint beam decoding scored by
//! character error rate.
//!
//! Everything runs on a self-contained `f64` tensor library with reverse-mode
//! differentiation, verified against central finite differences, and all
//! randomness flows from one seeded counter-based generator, so runs are
//! reproducible bit for bit.

pub mod eval;
pub mod features;
pub mod model;
pub mod numerics;
pub mod objectives;
pub mod pipeline;
pub mod synth;
pub mod training;
