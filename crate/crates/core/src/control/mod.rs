//! Runtime multi-policy control: the feasibility gate, frame delays and the
//! response window, automatic recovery, and the evaluation harnesses.

mod eval;
mod matching;
mod runtime;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversarial::GanError;
use crate::motion::MotionError;
use crate::physics::PhysicsError;
use crate::rl::RlError;

pub use crate::rl::PolicyBundle;
pub use eval::{
    imitation_error, imitation_error_with, link_position_error, robustness_sweep, threshold_curve, transition_test,
    Driver, EvalConfig, GateScores, ImitationReport, ImitationTrial, PlaybackDriver, PolicyDriver, RobustnessRow,
    ScoreBin, ThresholdPoint, TransitionReport, TransitionTrial, FAILURE_STREAK, ROBUSTNESS_CAP, SCORE_BINS,
    TRANSITION_HORIZON,
};
pub use matching::MotionMatcher;
pub use runtime::{Registry, Runtime, RuntimeEvent, Telemetry};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error(transparent)]
    Gan(#[from] GanError),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error("unknown policy `{name}`; valid targets: {}", valid.join(", "))]
    UnknownPolicy { name: String, valid: Vec<String> },
    #[error("invalid switch setting `{field}`: {reason}")]
    Config { field: String, reason: String },
}

/// What the switch gate compares against its threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateKind {
    /// Clipped-mean score of the target's discriminator ensemble.
    #[default]
    Discriminator,
    /// The target's value estimate of the live state.
    Value,
    /// Inverse motion-matching cost against the target's clip.
    MotionMatching,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoveryConfig {
    pub policy: String,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwitchConfig {
    /// Threshold used for targets without an override.
    pub threshold: f64,
    pub thresholds: BTreeMap<String, f64>,
    /// Frames a request stays open before it is rejected.
    pub response_window: usize,
    /// Frames after activation during which a policy cannot be switched away from.
    pub delays: BTreeMap<String, usize>,
    pub recovery: Option<RecoveryConfig>,
    pub gate: GateKind,
}

impl Default for SwitchConfig {
    fn default() -> Self {
        SwitchConfig {
            threshold: 0.1,
            thresholds: BTreeMap::new(),
            response_window: 90,
            delays: BTreeMap::new(),
            recovery: None,
            gate: GateKind::Discriminator,
        }
    }
}

impl SwitchConfig {
    pub fn threshold_for(&self, policy: &str) -> f64 {
        self.thresholds.get(policy).copied().unwrap_or(self.threshold)
    }

    pub fn delay_for(&self, policy: &str) -> usize {
        self.delays.get(policy).copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        let bad = |field: &str, reason: &str| Err(ControlError::Config { field: field.into(), reason: reason.into() });
        if self.gate == GateKind::Discriminator {
            let all = std::iter::once(self.threshold).chain(self.thresholds.values().copied());
            let rec = self.recovery.iter().map(|r| r.threshold);
            if all.chain(rec).any(|t| !(-1.0..=1.0).contains(&t)) {
                return bad("threshold", "discriminator thresholds must lie in [-1, 1]");
            }
        }
        if self.response_window == 0 {
            return bad("response_window", "must be at least 1 frame");
        }
        Ok(())
    }
}

/// Clipped-mean score of the target's ensemble on a five-frame window.
/// Identical arithmetic to the training reward.
pub fn switch_score(target: &PolicyBundle, window: &[f64]) -> Result<f64, ControlError> {
    Ok(target.ensemble.reward(window)?)
}

/// The target's value estimate of a state window.
pub fn value_switch_score(target: &PolicyBundle, state: &[f64]) -> Result<f64, ControlError> {
    Ok(target.actor.values(&[state])?[0])
}

/// Inverse motion-matching cost, `1 / (cost + 1e-6)`.
pub fn motion_matching_score(matcher: &MotionMatcher, state: &[f64]) -> f64 {
    1.0 / (matcher.cost(state) + 1e-6)
}
