//! Ensemble discriminator: shared trunk with `N` scalar heads, hinge or
//! cross-entropy loss, input-gradient penalty and the clipped-mean reward.

mod buffer;
mod ensemble;
mod loss;

use thiserror::Error;

use crate::nn::NnError;

pub use buffer::PairBuffer;
pub use ensemble::{interpolate_windows, DiscriminatorEnsemble, GanConfig, UpdateReport};
pub use loss::{bce_loss, bce_loss_value, clipped_mean, head_loss, hinge_loss, hinge_loss_value, LossKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GanError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("agent batch of {agent} does not match reference batch of {reference}")]
    Batch { agent: usize, reference: usize },
    #[error("window has {found} features, expected {expected}")]
    Width { expected: usize, found: usize },
    #[error("invalid discriminator setting `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("non-finite {0}")]
    NonFinite(String),
}
