//! Proximal policy optimization with advantage estimation, lockstep rollout
//! workers, and the adversarial training loop tying policy and discriminator
//! updates together.

mod bundle;
mod gae;
mod policy;
mod ppo;
mod rollout;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversarial::{GanConfig, GanError};
use crate::motion::MotionError;
use crate::nn::NnError;
use crate::physics::PhysicsError;

pub use bundle::{clip_digest, ClipMeta, PolicyBundle};
pub use gae::{gae, normalize_advantages};
pub use policy::{
    gaussian_log_prob, log_prob_graph, sample_action, sample_actions, ActorCritic, LOG_STD_MAX, LOG_STD_MIN,
};
pub use ppo::{clipped_surrogate, ppo_update, PpoBatch, PpoOptimizers, PpoStats};
pub use rollout::{
    collect_rollout, run_episode, worker_rng, EnvContext, EpisodeEnd, EpisodeSummary, Rollout, StepOutcome,
    Transition, Worker,
};
pub use train::{build_batch, train, IterationMetrics, JsonlMetrics, TrainEvent, TrainHooks, Trainer};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RlError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Gan(#[from] GanError),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid training setting `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("training diverged at iteration {iteration}: {reason}")]
    Diverged { iteration: usize, reason: String },
    #[error("non-finite {0}")]
    NonFinite(String),
}

/// Policy optimization settings. Defaults follow the reference setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub policy_network_learning_rate: f64,
    pub value_network_learning_rate: f64,
    pub reward_discount_factor: f64,
    pub gae_discount_factor: f64,
    pub surrogate_clip_range: f64,
    pub ppo_replay_buffer_size: usize,
    pub ppo_batch_size: usize,
    pub ppo_optimization_epochs: usize,
    pub policy_gru_units: usize,
    pub policy_hidden_units: Vec<usize>,
    pub initial_log_std: f64,
    pub initial_weight_std: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            policy_network_learning_rate: 5e-6,
            value_network_learning_rate: 1e-4,
            reward_discount_factor: 0.95,
            gae_discount_factor: 0.95,
            surrogate_clip_range: 0.2,
            ppo_replay_buffer_size: 4096,
            ppo_batch_size: 256,
            ppo_optimization_epochs: 5,
            policy_gru_units: 256,
            policy_hidden_units: vec![1024, 512],
            initial_log_std: -1.6,
            initial_weight_std: 0.05,
        }
    }
}

/// Everything the training loop needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub workers: usize,
    /// Physics threads; 0 picks `min(workers, available cores)`.
    pub threads: usize,
    /// Environment steps to collect before stopping.
    pub sample_budget: u64,
    /// Standard deviation of the initial pose noise (rad).
    pub init_noise: f64,
    /// Episode cap on cyclic clips (frames).
    pub overtime_limit: usize,
    /// Iterations between checkpoints; 0 disables periodic checkpoints.
    pub checkpoint_every: usize,
    pub ppo: PpoConfig,
    pub discriminator: GanConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            workers: 8,
            threads: 0,
            sample_budget: 2_000_000,
            init_noise: crate::motion::DEFAULT_INIT_NOISE,
            overtime_limit: 500,
            checkpoint_every: 25,
            ppo: PpoConfig::default(),
            discriminator: GanConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        let bad = |field: &str, reason: &str| Err(RlError::Config { field: field.into(), reason: reason.into() });
        let p = &self.ppo;
        if !(p.reward_discount_factor > 0.0 && p.reward_discount_factor <= 1.0) {
            return bad("reward_discount_factor", "must lie in (0, 1]");
        }
        if !(p.gae_discount_factor > 0.0 && p.gae_discount_factor <= 1.0) {
            return bad("gae_discount_factor", "must lie in (0, 1]");
        }
        if !(p.surrogate_clip_range > 0.0) {
            return bad("surrogate_clip_range", "must be positive");
        }
        if !(p.policy_network_learning_rate > 0.0) {
            return bad("policy_network_learning_rate", "must be positive");
        }
        if !(p.value_network_learning_rate > 0.0) {
            return bad("value_network_learning_rate", "must be positive");
        }
        if p.ppo_replay_buffer_size == 0 || p.ppo_batch_size == 0 {
            return bad("ppo_batch_size", "buffer and batch sizes must be positive");
        }
        if p.policy_gru_units == 0 || p.policy_hidden_units.contains(&0) {
            return bad("policy_hidden_units", "layer widths must be positive");
        }
        if self.workers == 0 {
            return bad("workers", "must be at least 1");
        }
        if self.overtime_limit == 0 {
            return bad("overtime_limit", "must be positive");
        }
        if !(self.init_noise >= 0.0) {
            return bad("init_noise", "must be non-negative");
        }
        self.discriminator.validate()?;
        Ok(())
    }

    /// Environment steps per worker in one iteration.
    pub fn steps_per_worker(&self) -> usize {
        self.ppo.ppo_replay_buffer_size.div_ceil(self.workers)
    }

    pub fn physics_threads(&self) -> usize {
        let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        let t = if self.threads == 0 { cores } else { self.threads };
        t.min(self.workers).max(1)
    }
}
