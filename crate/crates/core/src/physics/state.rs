use serde::{Deserialize, Serialize};

use super::{CharacterModel, PhysicsError};

/// Full dynamic state of the character.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub root_pos: [f64; 2],
    pub root_angle: f64,
    pub root_vel: [f64; 2],
    pub root_angvel: f64,
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
    /// Control frames simulated so far.
    pub frame: u64,
    /// Per-link ground contact flags from the last step.
    pub contacts: Vec<bool>,
}

impl SimState {
    /// All joints at zero, at rest, root at `root_pos`.
    pub fn rest(model: &CharacterModel, root_pos: [f64; 2]) -> Self {
        SimState {
            root_pos,
            root_angle: 0.0,
            root_vel: [0.0; 2],
            root_angvel: 0.0,
            q: vec![0.0; model.num_joints()],
            qd: vec![0.0; model.num_joints()],
            frame: 0,
            contacts: vec![false; model.num_links()],
        }
    }

    /// Rest pose with the lowest point of the body exactly on the ground.
    pub fn standing(model: &CharacterModel) -> Self {
        let mut s = Self::rest(model, [0.0, 0.0]);
        let lowest = super::lowest_point(model, &s);
        s.root_pos[1] = -lowest;
        s
    }

    pub fn check_dims(&self, model: &CharacterModel) -> Result<(), PhysicsError> {
        let nj = model.num_joints();
        if self.q.len() != nj || self.qd.len() != nj {
            return Err(PhysicsError::DimensionMismatch {
                expected: nj,
                found: self.q.len().min(self.qd.len()),
            });
        }
        if self.contacts.len() != model.num_links() {
            return Err(PhysicsError::DimensionMismatch {
                expected: model.num_links(),
                found: self.contacts.len(),
            });
        }
        Ok(())
    }

    pub fn generalized_positions(&self) -> Vec<f64> {
        let mut v = vec![self.root_pos[0], self.root_pos[1], self.root_angle];
        v.extend_from_slice(&self.q);
        v
    }

    pub fn generalized_velocities(&self) -> Vec<f64> {
        let mut v = vec![self.root_vel[0], self.root_vel[1], self.root_angvel];
        v.extend_from_slice(&self.qd);
        v
    }

    pub fn set_generalized_positions(&mut self, g: &[f64]) {
        self.root_pos = [g[0], g[1]];
        self.root_angle = g[2];
        self.q.copy_from_slice(&g[3..]);
    }

    pub fn set_generalized_velocities(&mut self, g: &[f64]) {
        self.root_vel = [g[0], g[1]];
        self.root_angvel = g[2];
        self.qd.copy_from_slice(&g[3..]);
    }

    pub fn is_finite(&self) -> bool {
        self.generalized_positions().iter().all(|v| v.is_finite())
            && self.generalized_velocities().iter().all(|v| v.is_finite())
    }
}
