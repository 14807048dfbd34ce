//! Procedural reference clips for the default biped topology.
//!
//! Leg poses come from two-link inverse kinematics with the feet held flat,
//! so stance feet stay planted exactly on the ground.

use std::f64::consts::PI;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{MotionClip, MotionError, Pose};
use crate::physics::{rotate, CharacterModel};

pub const CLIP_FPS: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Template {
    Stand,
    Walk,
    Hop,
    CrouchToStand,
    Lean,
}

impl Template {
    pub fn name(self) -> &'static str {
        match self {
            Template::Stand => "stand",
            Template::Walk => "walk",
            Template::Hop => "hop",
            Template::CrouchToStand => "crouch-to-stand",
            Template::Lean => "lean",
        }
    }

    /// Default `(amplitude, period)`; the period is the duration for non-cyclic templates.
    pub fn defaults(self) -> (f64, f64) {
        match self {
            Template::Stand => (0.0, 1.0),
            Template::Walk => (0.4, 1.0),
            Template::Hop => (0.08, 0.8),
            Template::CrouchToStand => (0.3, 2.0),
            Template::Lean => (0.3, 2.0),
        }
    }

    pub fn cyclic(self) -> bool {
        self != Template::CrouchToStand
    }
}

impl FromStr for Template {
    type Err = MotionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stand" => Ok(Template::Stand),
            "walk" => Ok(Template::Walk),
            "hop" => Ok(Template::Hop),
            "crouch-to-stand" | "getup" | "get-up" => Ok(Template::CrouchToStand),
            "lean" => Ok(Template::Lean),
            other => Err(MotionError::UnknownTemplate(other.to_string())),
        }
    }
}

/// Parameters of one procedural clip family.
///
/// `amplitude` is the stride length (walk, m), jump height (hop, m), crouch
/// depth (crouch-to-stand, m) or lean angle (lean, rad).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipSpec {
    pub template: String,
    #[serde(default)]
    pub amplitude: Option<f64>,
    #[serde(default)]
    pub period: Option<f64>,
    #[serde(default)]
    pub name: Option<String>,
    /// Number of clips to emit, with amplitudes spread ±10% per step around the base.
    #[serde(default = "one")]
    pub variants: usize,
}

fn one() -> usize {
    1
}

impl ClipSpec {
    pub fn new(template: &str) -> Self {
        ClipSpec { template: template.to_string(), amplitude: None, period: None, name: None, variants: 1 }
    }

    pub fn amplitude(mut self, a: f64) -> Self {
        self.amplitude = Some(a);
        self
    }

    pub fn period(mut self, p: f64) -> Self {
        self.period = Some(p);
        self
    }
}

/// Leg geometry read off the model.
struct Rig {
    joints: Vec<String>,
    hip_offset: [f64; 2],
    thigh: f64,
    shin: f64,
    ankle_height: f64,
    idx: [[usize; 3]; 2],
}

impl Rig {
    fn new(model: &CharacterModel) -> Result<Self, MotionError> {
        let names = model.joint_names();
        let find = |n: &str| {
            names.iter().position(|j| j == n).ok_or_else(|| {
                MotionError::Parse(format!("procedural clips need a joint named `{n}`"))
            })
        };
        let mut idx = [[0; 3]; 2];
        for (s, side) in ["left", "right"].iter().enumerate() {
            idx[s] = [find(&format!("{side}_hip"))?, find(&format!("{side}_knee"))?, find(&format!("{side}_ankle"))?];
        }
        let [hip, knee, ankle] = idx[0].map(|j| &model.joints[j]);
        let dist = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        let foot = &model.links[ankle.child];
        Ok(Rig {
            joints: names,
            hip_offset: hip.parent_anchor,
            thigh: dist(knee.parent_anchor, hip.child_anchor),
            shin: dist(ankle.parent_anchor, knee.child_anchor),
            ankle_height: ankle.child_anchor[1] + foot.half_extents[1],
            idx,
        })
    }

    fn standing_hip_height(&self) -> f64 {
        self.ankle_height + self.thigh + self.shin
    }

    /// Hip, knee and ankle angles that put the ankle pivot at `ankle` with the foot flat.
    fn leg(&self, hip: [f64; 2], ankle: [f64; 2], torso_angle: f64) -> [f64; 3] {
        let d = [ankle[0] - hip[0], ankle[1] - hip[1]];
        let r = (d[0] * d[0] + d[1] * d[1]).sqrt();
        let alpha = d[0].atan2(-d[1]);
        let (l1, l2) = (self.thigh, self.shin);
        let (thigh, shin) = if r >= l1 + l2 - 1e-9 {
            (alpha, alpha)
        } else {
            let b1 = ((l1 * l1 + r * r - l2 * l2) / (2.0 * l1 * r)).clamp(-1.0, 1.0).acos();
            let b2 = ((l2 * l2 + r * r - l1 * l1) / (2.0 * l2 * r)).clamp(-1.0, 1.0).acos();
            (alpha + b1, alpha - b2)
        };
        [thigh - torso_angle, shin - thigh, -shin]
    }

    /// Pose with the hip joint at `hip`, torso at `torso_angle`, and ankle pivots at `ankles`.
    fn pose(&self, hip: [f64; 2], torso_angle: f64, ankles: [[f64; 2]; 2]) -> Pose {
        let off = rotate(self.hip_offset, torso_angle);
        let mut q = vec![0.0; self.joints.len()];
        for s in 0..2 {
            let angles = self.leg(hip, ankles[s], torso_angle);
            for k in 0..3 {
                q[self.idx[s][k]] = angles[k];
            }
        }
        Pose { root: [hip[0] - off[0], hip[1] - off[1], torso_angle], q }
    }
}

fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

/// Generates the clips described by `spec` for `model`.
pub fn generate_procedural_clips(spec: &ClipSpec, model: &CharacterModel) -> Result<Vec<MotionClip>, MotionError> {
    let template: Template = spec.template.parse()?;
    let (default_amp, default_period) = template.defaults();
    let amplitude = spec.amplitude.unwrap_or(default_amp);
    let period = spec.period.unwrap_or(default_period);
    if !(period > 0.0) || !amplitude.is_finite() {
        return Err(MotionError::Parse(format!("bad amplitude/period for `{}`", template.name())));
    }
    let rig = Rig::new(model)?;
    let base = spec.name.clone().unwrap_or_else(|| template.name().to_string());
    let variants = spec.variants.max(1);
    let mut clips = Vec::with_capacity(variants);
    for v in 0..variants {
        let scale = 1.0 + 0.1 * (v as f64 - (variants - 1) as f64 / 2.0);
        let name = if variants == 1 { base.clone() } else { format!("{base}-{v}") };
        clips.push(generate(template, &rig, &name, amplitude * scale, period)?);
    }
    Ok(clips)
}

fn generate(template: Template, rig: &Rig, name: &str, amplitude: f64, period: f64) -> Result<MotionClip, MotionError> {
    let n = if template.cyclic() {
        (period * CLIP_FPS).round().max(2.0) as usize
    } else {
        (period * CLIP_FPS).round().max(1.0) as usize + 1
    };
    let h0 = rig.standing_hip_height();
    let ground = rig.ankle_height;
    let mut offset = [0.0; 2];
    let frames: Vec<Pose> = (0..n)
        .map(|i| {
            let t = i as f64 / CLIP_FPS;
            match template {
                Template::Stand => rig.pose([0.0, h0], 0.0, [[0.0, ground]; 2]),
                Template::Walk => {
                    let v = amplitude / period;
                    offset = [amplitude, 0.0];
                    let hip = [v * t, h0 - 0.04];
                    let foot = |phase_shift: f64| {
                        let cycle = t / period + phase_shift;
                        let k = cycle.floor();
                        let phi = cycle - k;
                        // touchdown puts the foot under the hip at mid-stance
                        let touch = v * ((k - phase_shift) * period + 0.3 * period);
                        if phi < 0.6 {
                            [touch, ground]
                        } else {
                            let s = (phi - 0.6) / 0.4;
                            [touch + amplitude * smoothstep(s), ground + 0.06 * (PI * s).sin()]
                        }
                    };
                    rig.pose(hip, 0.0, [foot(0.0), foot(0.5)])
                }
                Template::Hop => {
                    let z = h0 + amplitude * (2.0 * PI * t / period).sin();
                    let ankle = [0.0, ground.max(z - (h0 - ground))];
                    rig.pose([0.0, z], 0.0, [ankle; 2])
                }
                Template::CrouchToStand => {
                    let p = smoothstep(t / (0.75 * period));
                    let lean = -1.2 * amplitude * (1.0 - p);
                    let hip = [0.2 * lean.sin(), h0 - amplitude * (1.0 - p)];
                    rig.pose(hip, lean, [[0.0, ground]; 2])
                }
                Template::Lean => {
                    let lean = -amplitude * (2.0 * PI * t / period).sin();
                    let hip = [0.2 * lean.sin(), h0 - 0.02];
                    rig.pose(hip, lean, [[0.0, ground]; 2])
                }
            }
        })
        .collect();
    let clip = MotionClip::new(name, CLIP_FPS, template.cyclic(), rig.joints.clone(), frames)?
        .with_category(template.name());
    Ok(if template.cyclic() { clip.with_cycle_offset(offset) } else { clip })
}
