//! Tensors, a reverse-mode differentiation graph, deterministic random
//! numbers, and finite-difference gradient verification.

mod check;
mod graph;
mod rng;
mod tensor;

pub use check::{finite_diff_check, param_values, ParamValues};
pub use graph::{GradMap, Graph, NodeId, NEG_BIG};
pub use rng::Rng;
pub use tensor::Tensor;

/// Errors from gradient computation and verification.
#[derive(Debug, thiserror::Error)]
pub enum NumericsError {
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("function is not deterministic: evaluations {first} and {second} disagree")]
    NonDeterministic { first: f64, second: f64 },
}
