//! Small reverse-mode autodiff engine with second-order support, plus the
//! layers, initializers, optimizer and input normalizer used by the agents.

mod adam;
mod graph;
mod init;
mod network;
mod normalizer;
mod penalty;

use thiserror::Error;

pub use adam::Adam;
pub use graph::{frobenius, sigmoid, softplus, Graph, Tensor, Var};
pub use init::{init_orthogonal, init_truncated_normal, truncated_normal_std_ratio};
pub use network::{stack_sequences, Bound, Init, LayerSpec, Network, Param};
pub use normalizer::{RunningNormalizer, MIN_STD};
pub use penalty::{
    grad_norm_penalty, grad_norm_penalty_backward, grad_norm_penalty_finite_difference, input_gradient_norms,
    penalty_from_norms,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("no parameter named `{0}`")]
    MissingParam(String),
    #[error("non-finite value in `{0}`")]
    NonFinite(String),
}
