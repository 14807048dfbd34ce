use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::window::{build_window, FeatureKind, KinematicFrame, ObservationWindow, OBSERVATION_FRAMES};
use super::{MotionClip, MotionError, Pose};
use crate::physics::{CharacterModel, SimState};

/// Default standard deviation (rad) of the initial-pose noise.
pub const DEFAULT_INIT_NOISE: f64 = 0.03;
/// Root-height noise in metres per unit of noise scale.
pub const ROOT_HEIGHT_NOISE_RATIO: f64 = 0.05;

/// Additive pose noise drawn once per episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseNoise {
    pub root_z: f64,
    pub root_angle: f64,
    pub q: Vec<f64>,
}

impl PoseNoise {
    pub fn zero(joints: usize) -> Self {
        PoseNoise { root_z: 0.0, root_angle: 0.0, q: vec![0.0; joints] }
    }

    pub fn sample<R: Rng + ?Sized>(joints: usize, scale: f64, rng: &mut R) -> Self {
        if scale <= 0.0 {
            return Self::zero(joints);
        }
        let angle = Normal::new(0.0, scale).expect("positive std");
        let height = Normal::new(0.0, ROOT_HEIGHT_NOISE_RATIO * scale).expect("positive std");
        PoseNoise {
            root_z: height.sample(rng),
            root_angle: angle.sample(rng),
            q: (0..joints).map(|_| angle.sample(rng)).collect(),
        }
    }

    pub fn apply(&self, pose: &Pose) -> Pose {
        let mut p = pose.clone();
        p.root[1] += self.root_z;
        p.root[2] += self.root_angle;
        for (a, n) in p.q.iter_mut().zip(&self.q) {
            *a += n;
        }
        p
    }

    pub fn apply_state(&self, state: &mut SimState) {
        state.root_pos[1] += self.root_z;
        state.root_angle += self.root_angle;
        for (a, n) in state.q.iter_mut().zip(&self.q) {
            *a += n;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.root_z == 0.0 && self.root_angle == 0.0 && self.q.iter().all(|&v| v == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitSample {
    pub pose: Pose,
    pub clip: usize,
    pub start: f64,
    pub noise: PoseNoise,
}

/// Uniform fractional start index within a clip.
fn uniform_start<R: Rng + ?Sized>(clip: &MotionClip, reserve: usize, rng: &mut R) -> f64 {
    let hi = if clip.cyclic { clip.span() } else { (clip.len() - 1 - reserve) as f64 };
    if hi <= 0.0 {
        0.0
    } else if clip.cyclic {
        rng.random_range(0.0..hi)
    } else {
        rng.random_range(0.0..=hi)
    }
}

/// Random clip, random fractional start, interpolated pose plus noise.
pub fn sample_init_pose<R: Rng + ?Sized>(
    clips: &[MotionClip],
    noise_scale: f64,
    rng: &mut R,
) -> Result<InitSample, MotionError> {
    if clips.is_empty() {
        return Err(MotionError::NoClips);
    }
    let clip = rng.random_range(0..clips.len());
    let start = uniform_start(&clips[clip], 0, rng);
    let base = clips[clip].interpolate_pose(start)?;
    let noise = PoseNoise::sample(base.q.len(), noise_scale, rng);
    let pose = if noise.is_zero() { base } else { noise.apply(&base) };
    Ok(InitSample { pose, clip, start, noise })
}

/// Reference state at fractional frame `t`, clamped into a non-cyclic clip's range.
pub fn reference_state(clip: &MotionClip, model: &CharacterModel, t: f64) -> Result<SimState, MotionError> {
    let t = if clip.cyclic { t } else { t.clamp(0.0, clip.span()) };
    clip.state_at(model, t)
}

/// Draws reference observation windows from a clip collection.
#[derive(Debug, Clone)]
pub struct ReferenceSampler {
    eligible: Vec<usize>,
    kind: FeatureKind,
}

impl ReferenceSampler {
    /// Non-cyclic clips shorter than a window are excluded.
    pub fn new(clips: &[MotionClip], kind: FeatureKind) -> Result<Self, MotionError> {
        let eligible: Vec<usize> = clips
            .iter()
            .enumerate()
            .filter(|(_, c)| c.cyclic || c.len() >= OBSERVATION_FRAMES)
            .map(|(i, _)| i)
            .collect();
        if eligible.is_empty() {
            return Err(MotionError::NoClips);
        }
        Ok(ReferenceSampler { eligible, kind })
    }

    pub fn eligible(&self) -> &[usize] {
        &self.eligible
    }

    /// Uniform clip and start; returns the chosen clip and start with the window.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        clips: &[MotionClip],
        model: &CharacterModel,
        noise: Option<&PoseNoise>,
        rng: &mut R,
    ) -> Result<(ObservationWindow, usize, f64), MotionError> {
        let clip = self.eligible[rng.random_range(0..self.eligible.len())];
        let start = uniform_start(&clips[clip], OBSERVATION_FRAMES - 1, rng);
        let w = reference_window_at(&clips[clip], model, self.kind, start, noise)?;
        Ok((w, clip, start))
    }
}

/// The window of five reference frames starting at fractional index `start`.
pub fn reference_window_at(
    clip: &MotionClip,
    model: &CharacterModel,
    kind: FeatureKind,
    start: f64,
    noise: Option<&PoseNoise>,
) -> Result<ObservationWindow, MotionError> {
    let mut frames = Vec::with_capacity(OBSERVATION_FRAMES);
    for k in 0..OBSERVATION_FRAMES {
        let mut s = clip.state_at(model, start + k as f64)?;
        if let Some(n) = noise {
            n.apply_state(&mut s);
        }
        frames.push(KinematicFrame::from_state(model, &s)?);
    }
    Ok(build_window(&frames.iter().collect::<Vec<_>>(), kind))
}

/// One reference observation window from a uniformly chosen clip and start.
pub fn reference_window_sampler<R: Rng + ?Sized>(
    clips: &[MotionClip],
    model: &CharacterModel,
    kind: FeatureKind,
    rng: &mut R,
) -> Result<ObservationWindow, MotionError> {
    Ok(ReferenceSampler::new(clips, kind)?.sample(clips, model, None, rng)?.0)
}
