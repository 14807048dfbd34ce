use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MotionError;
use crate::physics::{CharacterModel, SimState};

pub const CLIP_FORMAT_VERSION: u32 = 1;
/// Largest joint/root-angle jump (rad) allowed across the loop seam of a cyclic clip.
pub const LOOP_ANGLE_TOLERANCE: f64 = 0.35;
/// Largest root-height jump (m) allowed across the loop seam.
pub const LOOP_HEIGHT_TOLERANCE: f64 = 0.08;

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Kinematic keyframe: root `[x, z, θ]` and joint angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub root: [f64; 3],
    pub q: Vec<f64>,
}

impl Pose {
    pub fn from_state(state: &SimState) -> Self {
        Pose { root: [state.root_pos[0], state.root_pos[1], state.root_angle], q: state.q.clone() }
    }

    /// A [`SimState`] at this pose with the given generalized velocity.
    pub fn to_state(&self, model: &CharacterModel, velocity: &[f64]) -> SimState {
        let mut s = SimState::rest(model, [self.root[0], self.root[1]]);
        s.root_angle = self.root[2];
        s.q.copy_from_slice(&self.q);
        s.set_generalized_velocities(velocity);
        s
    }

    fn is_finite(&self) -> bool {
        self.root.iter().chain(self.q.iter()).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameVelocity {
    pub root: [f64; 3],
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipFrame {
    pub root: [f64; 3],
    pub q: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vel: Option<FrameVelocity>,
}

/// On-disk clip document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipFile {
    pub version: u32,
    pub name: String,
    pub fps: f64,
    pub cyclic: bool,
    #[serde(default)]
    pub category: String,
    pub joints: Vec<String>,
    /// Root `[x, z]` displacement over one loop of a cyclic clip.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycle_offset: Option<[f64; 2]>,
    pub frames: Vec<ClipFrame>,
}

/// Keyframed reference motion sampled at a fixed frame rate.
///
/// A cyclic clip of `n` frames loops from frame `n - 1` back to frame `0`,
/// so its period is `n` frames; the root advances by `cycle_offset` per loop.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionClip {
    pub name: String,
    pub fps: f64,
    pub cyclic: bool,
    pub category: String,
    pub joints: Vec<String>,
    pub frames: Vec<Pose>,
    pub velocities: Option<Vec<FrameVelocity>>,
    pub cycle_offset: [f64; 2],
}

impl MotionClip {
    pub fn new(name: &str, fps: f64, cyclic: bool, joints: Vec<String>, frames: Vec<Pose>) -> Result<Self, MotionError> {
        let cycle_offset = if cyclic && frames.len() >= 2 {
            let n = frames.len() as f64;
            let (first, last) = (&frames[0], &frames[frames.len() - 1]);
            [(last.root[0] - first.root[0]) * n / (n - 1.0), 0.0]
        } else {
            [0.0; 2]
        };
        let clip = MotionClip {
            name: name.to_string(),
            fps,
            cyclic,
            category: String::new(),
            joints,
            frames,
            velocities: None,
            cycle_offset,
        };
        clip.validate()?;
        Ok(clip)
    }

    pub fn with_category(mut self, category: &str) -> Self {
        self.category = category.to_string();
        self
    }

    pub fn with_cycle_offset(mut self, offset: [f64; 2]) -> Self {
        self.cycle_offset = offset;
        self
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Largest valid fractional frame index (non-cyclic) or the period (cyclic).
    pub fn span(&self) -> f64 {
        if self.cyclic {
            self.frames.len() as f64
        } else {
            (self.frames.len() - 1) as f64
        }
    }

    pub fn duration(&self) -> f64 {
        self.span() / self.fps
    }

    pub fn validate(&self) -> Result<(), MotionError> {
        let invalid = |m: String| Err(MotionError::InvalidClip { name: self.name.clone(), reason: m });
        if self.frames.len() < 2 {
            return invalid("needs at least 2 frames".into());
        }
        if !(self.fps > 0.0) {
            return invalid("fps must be positive".into());
        }
        let nj = self.joints.len();
        for (i, f) in self.frames.iter().enumerate() {
            if f.q.len() != nj {
                return invalid(format!("frame {i} has {} joint angles, expected {nj}", f.q.len()));
            }
            if !f.is_finite() {
                return invalid(format!("frame {i} is not finite"));
            }
        }
        if let Some(v) = &self.velocities {
            if v.len() != self.frames.len() || v.iter().any(|v| v.q.len() != nj) {
                return invalid("velocity arrays do not match frames".into());
            }
        }
        if self.cyclic {
            let (first, last) = (&self.frames[0], &self.frames[self.frames.len() - 1]);
            let angle_gap = first
                .q
                .iter()
                .zip(&last.q)
                .map(|(a, b)| wrap_angle(a - b).abs())
                .fold(wrap_angle(first.root[2] - last.root[2]).abs(), f64::max);
            if angle_gap > LOOP_ANGLE_TOLERANCE || (first.root[1] - last.root[1]).abs() > LOOP_HEIGHT_TOLERANCE {
                return invalid(format!("loop seam gap {angle_gap:.3} rad exceeds tolerance"));
            }
        }
        Ok(())
    }

    /// Pose at fractional frame `t`: linear root position, shortest-arc angles.
    pub fn interpolate_pose(&self, t: f64) -> Result<Pose, MotionError> {
        if !t.is_finite() {
            return Err(MotionError::OutOfRange { t, span: self.span() });
        }
        let n = self.frames.len();
        if self.cyclic {
            let period = n as f64;
            let cycles = (t / period).floor();
            let local = t - cycles * period;
            let i = (local.floor() as usize).min(n - 1);
            let frac = local - i as f64;
            let a = &self.frames[i];
            let mut pose = if i + 1 < n {
                lerp_pose(a, &self.frames[i + 1], frac)
            } else {
                let mut b = self.frames[0].clone();
                b.root[0] += self.cycle_offset[0];
                b.root[1] += self.cycle_offset[1];
                lerp_pose(a, &b, frac)
            };
            pose.root[0] += cycles * self.cycle_offset[0];
            pose.root[1] += cycles * self.cycle_offset[1];
            Ok(pose)
        } else {
            let last = (n - 1) as f64;
            if t < 0.0 || t > last {
                return Err(MotionError::OutOfRange { t, span: last });
            }
            let i = (t.floor() as usize).min(n - 2);
            Ok(lerp_pose(&self.frames[i], &self.frames[i + 1], t - i as f64))
        }
    }

    /// Generalized velocity `[ẋ, ż, θ̇, q̇...]` at fractional frame `t`, by
    /// central differences of the interpolated trajectory (one-sided at the
    /// ends of non-cyclic clips). Stored keyframe velocities, when present,
    /// are interpolated instead.
    pub fn velocity_at(&self, t: f64) -> Result<Vec<f64>, MotionError> {
        if let Some(vel) = &self.velocities {
            return self.interpolate_stored_velocity(vel, t);
        }
        let h = 0.5;
        let (lo, hi) = if self.cyclic {
            (t - h, t + h)
        } else {
            let last = self.span();
            if t < 0.0 || t > last {
                return Err(MotionError::OutOfRange { t, span: last });
            }
            ((t - h).max(0.0), (t + h).min(last))
        };
        let (a, b) = (self.interpolate_pose(lo)?, self.interpolate_pose(hi)?);
        let scale = self.fps / (hi - lo);
        let mut v = vec![(b.root[0] - a.root[0]) * scale, (b.root[1] - a.root[1]) * scale];
        v.push(wrap_angle(b.root[2] - a.root[2]) * scale);
        v.extend(a.q.iter().zip(&b.q).map(|(x, y)| wrap_angle(y - x) * scale));
        Ok(v)
    }

    fn interpolate_stored_velocity(&self, vel: &[FrameVelocity], t: f64) -> Result<Vec<f64>, MotionError> {
        let n = self.frames.len();
        let (i, j, frac) = if self.cyclic {
            let local = t.rem_euclid(n as f64);
            let i = (local.floor() as usize).min(n - 1);
            (i, (i + 1) % n, local - i as f64)
        } else {
            if t < 0.0 || t > self.span() {
                return Err(MotionError::OutOfRange { t, span: self.span() });
            }
            let i = (t.floor() as usize).min(n - 2);
            (i, i + 1, t - i as f64)
        };
        let mix = |a: f64, b: f64| a + (b - a) * frac;
        let mut v: Vec<f64> = (0..3).map(|k| mix(vel[i].root[k], vel[j].root[k])).collect();
        v.extend(vel[i].q.iter().zip(&vel[j].q).map(|(a, b)| mix(*a, *b)));
        Ok(v)
    }

    /// Interpolated pose and velocity as a simulator state.
    pub fn state_at(&self, model: &CharacterModel, t: f64) -> Result<SimState, MotionError> {
        let pose = self.interpolate_pose(t)?;
        let vel = self.velocity_at(t)?;
        Ok(pose.to_state(model, &vel))
    }

    pub fn to_file(&self) -> ClipFile {
        ClipFile {
            version: CLIP_FORMAT_VERSION,
            name: self.name.clone(),
            fps: self.fps,
            cyclic: self.cyclic,
            category: self.category.clone(),
            joints: self.joints.clone(),
            cycle_offset: if self.cyclic { Some(self.cycle_offset) } else { None },
            frames: self
                .frames
                .iter()
                .enumerate()
                .map(|(i, f)| ClipFrame {
                    root: f.root,
                    q: f.q.clone(),
                    vel: self.velocities.as_ref().map(|v| v[i].clone()),
                })
                .collect(),
        }
    }

    pub fn from_file(file: ClipFile) -> Result<Self, MotionError> {
        if file.version != CLIP_FORMAT_VERSION {
            return Err(MotionError::Version { found: file.version, expected: CLIP_FORMAT_VERSION });
        }
        let has_vel = file.frames.iter().filter(|f| f.vel.is_some()).count();
        if has_vel != 0 && has_vel != file.frames.len() {
            return Err(MotionError::InvalidClip {
                name: file.name,
                reason: "velocities must be given for every frame or none".into(),
            });
        }
        let velocities = (has_vel > 0).then(|| file.frames.iter().map(|f| f.vel.clone().unwrap()).collect());
        let frames: Vec<Pose> = file.frames.into_iter().map(|f| Pose { root: f.root, q: f.q }).collect();
        let mut clip = MotionClip::new(&file.name, file.fps, file.cyclic, file.joints, frames)?;
        clip.category = file.category;
        if let Some(offset) = file.cycle_offset {
            clip.cycle_offset = offset;
        }
        clip.velocities = velocities;
        clip.validate()?;
        Ok(clip)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("clip serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, MotionError> {
        let file: ClipFile = serde_json::from_str(text).map_err(|e| MotionError::Parse(e.to_string()))?;
        Self::from_file(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MotionError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| MotionError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MotionError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| MotionError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    /// Checks the clip's joint list against a character model.
    pub fn check_model(&self, model: &CharacterModel) -> Result<(), MotionError> {
        if self.joints != model.joint_names() {
            return Err(MotionError::InvalidClip {
                name: self.name.clone(),
                reason: format!("joints {:?} do not match model joints {:?}", self.joints, model.joint_names()),
            });
        }
        Ok(())
    }
}

fn lerp_pose(a: &Pose, b: &Pose, frac: f64) -> Pose {
    if frac == 0.0 {
        return a.clone();
    }
    let lerp = |x: f64, y: f64| x + (y - x) * frac;
    let arc = |x: f64, y: f64| x + wrap_angle(y - x) * frac;
    Pose {
        root: [lerp(a.root[0], b.root[0]), lerp(a.root[1], b.root[1]), arc(a.root[2], b.root[2])],
        q: a.q.iter().zip(&b.q).map(|(x, y)| arc(*x, *y)).collect(),
    }
}
