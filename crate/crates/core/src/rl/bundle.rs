use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ActorCritic, RlError, TrainConfig};
use crate::adversarial::DiscriminatorEnsemble;
use crate::motion::{build_state_window, FeatureKind, MotionClip};
use crate::physics::{CharacterModel, SimConfig, SimState};

/// Identity of a training clip, kept so a checkpoint can name its data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipMeta {
    pub name: String,
    pub cyclic: bool,
    pub frames: usize,
    /// Hex SHA-256 of the clip's canonical JSON.
    pub digest: String,
}

impl ClipMeta {
    pub fn of(clip: &MotionClip) -> Self {
        ClipMeta { name: clip.name.clone(), cyclic: clip.cyclic, frames: clip.len(), digest: clip_digest(clip) }
    }
}

pub fn clip_digest(clip: &MotionClip) -> String {
    let hash = Sha256::digest(clip.to_json().as_bytes());
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

/// One trained behavior: policy, value function, discriminator ensemble and
/// the metadata needed to run it.
#[derive(Debug, Clone)]
pub struct PolicyBundle {
    pub name: String,
    pub model: CharacterModel,
    pub sim: SimConfig,
    pub actor: ActorCritic,
    pub ensemble: DiscriminatorEnsemble,
    pub observation: FeatureKind,
    pub clips: Vec<ClipMeta>,
    pub config: TrainConfig,
}

impl PolicyBundle {
    /// Deterministic PD targets for a state window.
    pub fn act(&self, state: &[f64]) -> Result<Vec<f64>, RlError> {
        Ok(self.actor.means(&[state])?.row(0).to_vec())
    }

    /// Deterministic PD targets for the last four simulator states.
    pub fn act_on_history(&self, history: &[SimState]) -> Result<Vec<f64>, RlError> {
        let w = build_state_window(history, &self.model)?;
        self.act(&w.data)
    }

    /// Checks that every network matches the character and window layout.
    pub fn validate(&self) -> Result<(), RlError> {
        let nj = self.model.num_joints();
        let shape = |what: &str| Err(RlError::Shape(format!("{what} does not match the character model")));
        if self.actor.action_dim() != nj || self.actor.policy.output_dim() != nj {
            return shape("policy output");
        }
        if self.actor.frame_width() != FeatureKind::LinkVel.frame_width(&self.model) {
            return shape("policy input");
        }
        if self.actor.value.output_dim() != 1 || self.actor.value.input_dim() != self.actor.frame_width() {
            return shape("value network");
        }
        if self.ensemble.frame_width() != self.observation.frame_width(&self.model) {
            return shape("discriminator input");
        }
        Ok(())
    }
}
