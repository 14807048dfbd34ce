//! Reference clips, pose interpolation, procedural clip generation, episode
//! initialization and the observation/state windows.

mod clip;
mod procedural;
mod sampler;
mod window;

use thiserror::Error;

use crate::physics::PhysicsError;

pub use clip::{
    wrap_angle, ClipFile, ClipFrame, FrameVelocity, MotionClip, Pose, CLIP_FORMAT_VERSION, LOOP_ANGLE_TOLERANCE,
    LOOP_HEIGHT_TOLERANCE,
};
pub use procedural::{generate_procedural_clips, ClipSpec, Template, CLIP_FPS};
pub use sampler::{
    reference_state, reference_window_at, reference_window_sampler, sample_init_pose, InitSample, PoseNoise,
    ReferenceSampler, DEFAULT_INIT_NOISE, ROOT_HEIGHT_NOISE_RATIO,
};
pub use window::{
    build_observation_window, build_state_window, build_window, FeatureKind, KinematicFrame, ObservationWindow,
    StateWindow, Window, OBSERVATION_FRAMES, STATE_FRAMES,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MotionError {
    #[error("clip `{name}` is invalid: {reason}")]
    InvalidClip { name: String, reason: String },
    #[error("frame index {t} outside clip range [0, {span}]")]
    OutOfRange { t: f64, span: f64 },
    #[error("clip format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("window needs {expected} frames, got {found}")]
    WindowLength { expected: usize, found: usize },
    #[error("no usable clips")]
    NoClips,
    #[error("unknown clip template `{0}`")]
    UnknownTemplate(String),
    #[error("cannot parse clip: {0}")]
    Parse(String),
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error(transparent)]
    Physics(#[from] PhysicsError),
}
