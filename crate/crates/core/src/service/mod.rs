//! Run configuration, checkpoints, the command-line front end, benchmarks,
//! and the live websocket session that streams a character to viewers.

mod bench;
mod checkpoint;
pub mod cli;
mod config;
mod server;
mod session;
pub mod wire;

use std::path::PathBuf;

use thiserror::Error;

use crate::control::ControlError;
use crate::motion::MotionError;
use crate::physics::PhysicsError;
use crate::rl::RlError;

pub use bench::{bench, count_params, BenchReport, LatencyStats};
pub use checkpoint::{
    load_bundle, save_bundle, Checkpoint, CheckpointMeta, NetworkRecord, ParamRecord, CHECKPOINT_FORMAT,
    CHECKPOINT_VERSION,
};
pub use config::{ClipSource, RunConfig, TrainingSection};
pub use server::{serve, ClientQueue, ServerHandle, ServerOptions};
pub use session::Session;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{path}: {message}")]
    Config { path: String, message: String },
    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    Version { found: u64, expected: u32 },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
}

impl ServiceError {
    /// 2 for bad input, 3 for a diverged simulation or training run, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        let diverged = |e: &PhysicsError| matches!(e, PhysicsError::Divergence { .. });
        match self {
            ServiceError::Config { .. }
            | ServiceError::MissingFile(_)
            | ServiceError::Version { .. }
            | ServiceError::Input(_) => 2,
            ServiceError::Rl(RlError::Diverged { .. } | RlError::NonFinite(_)) => 3,
            ServiceError::Rl(RlError::Physics(p)) | ServiceError::Physics(p) if diverged(p) => 3,
            ServiceError::Control(ControlError::Physics(p)) if diverged(p) => 3,
            ServiceError::Control(ControlError::Rl(RlError::Physics(p))) if diverged(p) => 3,
            ServiceError::Rl(RlError::Config { .. }) | ServiceError::Control(ControlError::UnknownPolicy { .. }) => 2,
            ServiceError::Control(ControlError::Config { .. }) => 2,
            ServiceError::Motion(MotionError::Io { .. } | MotionError::Parse(_) | MotionError::Version { .. }) => 2,
            ServiceError::Motion(MotionError::UnknownTemplate(_) | MotionError::InvalidClip { .. }) => 2,
            ServiceError::Physics(PhysicsError::Parse(_) | PhysicsError::InvalidModel(_)) => 2,
            _ => 1,
        }
    }
}

pub(crate) fn io_error(path: impl AsRef<std::path::Path>, e: std::io::Error) -> ServiceError {
    let path = path.as_ref();
    if e.kind() == std::io::ErrorKind::NotFound {
        ServiceError::MissingFile(path.to_path_buf())
    } else {
        ServiceError::Io { path: path.display().to_string(), reason: e.to_string() }
    }
}
