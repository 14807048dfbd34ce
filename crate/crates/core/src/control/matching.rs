use super::ControlError;
use crate::motion::{build_window, FeatureKind, KinematicFrame, MotionClip, MotionError, STATE_FRAMES};
use crate::physics::CharacterModel;

/// State windows of every keyframe of a clip, for nearest-frame lookup.
#[derive(Debug, Clone)]
pub struct MotionMatcher {
    windows: Vec<Vec<f64>>,
}

impl MotionMatcher {
    /// One window per keyframe with a full history. Cyclic clips wrap into the
    /// previous loop, so every keyframe qualifies.
    pub fn new(clip: &MotionClip, model: &CharacterModel) -> Result<Self, ControlError> {
        let first = if clip.cyclic { 0 } else { STATE_FRAMES - 1 };
        let mut windows = Vec::new();
        for end in first..clip.len() {
            let frames: Vec<KinematicFrame> = (0..STATE_FRAMES)
                .map(|k| {
                    let t = end as f64 - (STATE_FRAMES - 1 - k) as f64;
                    KinematicFrame::from_state(model, &clip.state_at(model, t)?)
                })
                .collect::<Result<_, MotionError>>()?;
            windows.push(build_window(&frames.iter().collect::<Vec<_>>(), FeatureKind::LinkVel).data);
        }
        if windows.is_empty() {
            return Err(ControlError::Config { field: "clip".into(), reason: format!("`{}` is too short", clip.name) });
        }
        Ok(MotionMatcher { windows })
    }

    pub fn windows(&self) -> &[Vec<f64>] {
        &self.windows
    }

    /// Smallest squared distance between `state` and any clip window (uniform weights).
    pub fn cost(&self, state: &[f64]) -> f64 {
        self.windows
            .iter()
            .map(|w| w.iter().zip(state).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    }
}
