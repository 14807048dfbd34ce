use serde::{Deserialize, Serialize};

use super::MotionError;
use crate::physics::{forward_kinematics, link_velocities, rotate, CharacterModel, SimState};

pub const OBSERVATION_FRAMES: usize = 5;
pub const STATE_FRAMES: usize = 4;

/// Per-frame feature layout.
///
/// `Link` is the discriminator default (per link `x, z, cos, sin`); `LinkVel`
/// adds per-link `vx, vz, ω` and is the policy state layout. The `Joint`
/// variants describe the pose by root features plus raw joint angles instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    Link,
    #[serde(rename = "link+vel")]
    LinkVel,
    Joint,
    #[serde(rename = "joint+vel")]
    JointVel,
}

impl FeatureKind {
    pub fn frame_width(self, model: &CharacterModel) -> usize {
        let (nl, nj) = (model.num_links(), model.num_joints());
        match self {
            FeatureKind::Link => 4 * nl,
            FeatureKind::LinkVel => 7 * nl,
            FeatureKind::Joint => 4 + nj,
            FeatureKind::JointVel => 7 + 2 * nj,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Link => "link",
            FeatureKind::LinkVel => "link+vel",
            FeatureKind::Joint => "joint",
            FeatureKind::JointVel => "joint+vel",
        }
    }

    pub fn parse(s: &str) -> Result<Self, MotionError> {
        match s {
            "link" => Ok(FeatureKind::Link),
            "link+vel" => Ok(FeatureKind::LinkVel),
            "joint" => Ok(FeatureKind::Joint),
            "joint+vel" => Ok(FeatureKind::JointVel),
            other => Err(MotionError::Parse(format!("unknown feature kind `{other}`"))),
        }
    }
}

/// World-frame kinematics of one frame, computed once and reused by every
/// window that contains the frame.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicFrame {
    pub root: [f64; 3],
    pub root_vel: [f64; 3],
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
    pub link_pos: Vec<[f64; 2]>,
    pub link_angle: Vec<f64>,
    pub link_vel: Vec<[f64; 2]>,
    pub link_omega: Vec<f64>,
}

impl KinematicFrame {
    pub fn from_state(model: &CharacterModel, state: &SimState) -> Result<Self, MotionError> {
        let poses = forward_kinematics(model, state)?;
        let vels = link_velocities(model, state)?;
        Ok(KinematicFrame {
            root: [state.root_pos[0], state.root_pos[1], state.root_angle],
            root_vel: [state.root_vel[0], state.root_vel[1], state.root_angvel],
            q: state.q.clone(),
            qd: state.qd.clone(),
            link_pos: poses.iter().map(|p| p.pos).collect(),
            link_angle: poses.iter().map(|p| p.angle).collect(),
            link_vel: vels.iter().map(|v| v.linear).collect(),
            link_omega: vels.iter().map(|v| v.angular).collect(),
        })
    }
}

/// Flattened multi-frame feature tensor, oldest frame first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub frames: usize,
    pub frame_width: usize,
    pub data: Vec<f64>,
}

/// Discriminator input: 5 pose frames.
pub type ObservationWindow = Window;
/// Policy input: 4 velocity-augmented frames.
pub type StateWindow = Window;

impl Window {
    pub fn frame(&self, k: usize) -> &[f64] {
        &self.data[k * self.frame_width..(k + 1) * self.frame_width]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Features of `frames`, expressed relative to the root position and heading
/// of the last frame. In the sagittal plane the heading is the root angle.
pub fn build_window(frames: &[&KinematicFrame], kind: FeatureKind) -> Window {
    let last = frames[frames.len() - 1];
    let origin = [last.root[0], last.root[1]];
    let heading = last.root[2];
    let local = |p: [f64; 2]| rotate([p[0] - origin[0], p[1] - origin[1]], -heading);
    let mut data = Vec::new();
    for f in frames {
        match kind {
            FeatureKind::Link | FeatureKind::LinkVel => {
                for i in 0..f.link_pos.len() {
                    let p = local(f.link_pos[i]);
                    let (s, c) = (f.link_angle[i] - heading).sin_cos();
                    data.extend_from_slice(&[p[0], p[1], c, s]);
                    if kind == FeatureKind::LinkVel {
                        let v = rotate(f.link_vel[i], -heading);
                        data.extend_from_slice(&[v[0], v[1], f.link_omega[i]]);
                    }
                }
            }
            FeatureKind::Joint | FeatureKind::JointVel => {
                let p = local([f.root[0], f.root[1]]);
                let (s, c) = (f.root[2] - heading).sin_cos();
                data.extend_from_slice(&[p[0], p[1], c, s]);
                data.extend_from_slice(&f.q);
                if kind == FeatureKind::JointVel {
                    let v = rotate([f.root_vel[0], f.root_vel[1]], -heading);
                    data.extend_from_slice(&[v[0], v[1], f.root_vel[2]]);
                    data.extend_from_slice(&f.qd);
                }
            }
        }
    }
    let frame_width = data.len() / frames.len();
    Window { frames: frames.len(), frame_width, data }
}

fn frames_of(model: &CharacterModel, states: &[SimState]) -> Result<Vec<KinematicFrame>, MotionError> {
    states.iter().map(|s| KinematicFrame::from_state(model, s)).collect()
}

/// Discriminator observation over exactly five consecutive frames.
pub fn build_observation_window(
    states: &[SimState],
    model: &CharacterModel,
    kind: FeatureKind,
) -> Result<ObservationWindow, MotionError> {
    if states.len() != OBSERVATION_FRAMES {
        return Err(MotionError::WindowLength { expected: OBSERVATION_FRAMES, found: states.len() });
    }
    let frames = frames_of(model, states)?;
    Ok(build_window(&frames.iter().collect::<Vec<_>>(), kind))
}

/// Policy state over exactly four consecutive frames with velocities.
pub fn build_state_window(states: &[SimState], model: &CharacterModel) -> Result<StateWindow, MotionError> {
    if states.len() != STATE_FRAMES {
        return Err(MotionError::WindowLength { expected: STATE_FRAMES, found: states.len() });
    }
    let frames = frames_of(model, states)?;
    Ok(build_window(&frames.iter().collect::<Vec<_>>(), FeatureKind::LinkVel))
}
