use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    motion_matching_score, switch_score, value_switch_score, ControlError, MotionMatcher, PolicyBundle,
};
use crate::motion::{
    build_observation_window, build_state_window, reference_state, sample_init_pose, MotionClip, OBSERVATION_FRAMES,
};
use crate::physics::{
    check_early_termination, forward_kinematics, CharacterModel, Perturbation, PhysicsError, SimState, Simulator,
};
use crate::rl::worker_rng;

/// Frames the target must stay up after a forced switch.
pub const TRANSITION_HORIZON: usize = 90;
/// Consecutive lying frames that count as a fall.
pub const FAILURE_STREAK: usize = 10;
/// Trials that never fall are scored at this many frames.
pub const ROBUSTNESS_CAP: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub trials: usize,
    pub seed: u64,
    /// 0 picks the number of available cores.
    pub threads: usize,
    /// Pose noise at the start of each trial.
    pub init_noise: f64,
    /// Overrides the imitation horizon (one cycle, or the rest of the clip).
    pub frames: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { trials: 20, seed: 0, threads: 0, init_noise: 0.0, frames: None }
    }
}

impl EvalConfig {
    fn threads(&self) -> usize {
        if self.threads > 0 {
            self.threads
        } else {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        }
    }
}

/// Runs `f(0..n)` over a few scoped threads, keeping the input order.
fn par_map<T, F>(n: usize, threads: usize, f: F) -> Result<Vec<T>, ControlError>
where
    T: Send,
    F: Fn(usize) -> Result<T, ControlError> + Sync,
{
    let threads = threads.clamp(1, n.max(1));
    if threads == 1 {
        return (0..n).map(&f).collect();
    }
    let chunk = n.div_ceil(threads);
    let f = &f;
    let parts: Vec<Result<Vec<T>, ControlError>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|t| s.spawn(move || (t * chunk..((t + 1) * chunk).min(n)).map(f).collect()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("evaluation thread panicked")).collect()
    });
    let mut out = Vec::with_capacity(n);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Produces the next simulator state from the recent history.
pub trait Driver {
    fn next_state(&mut self, history: &[SimState]) -> Result<SimState, ControlError>;
}

/// A trained policy driving the physics simulator.
pub struct PolicyDriver<'a> {
    pub bundle: &'a PolicyBundle,
    pub sim: &'a Simulator,
    pub perturbations: Vec<Perturbation>,
}

impl<'a> PolicyDriver<'a> {
    pub fn new(bundle: &'a PolicyBundle, sim: &'a Simulator) -> Self {
        PolicyDriver { bundle, sim, perturbations: Vec::new() }
    }
}

impl Driver for PolicyDriver<'_> {
    fn next_state(&mut self, history: &[SimState]) -> Result<SimState, ControlError> {
        let n = history.len();
        let targets = self.bundle.act_on_history(&history[n - 4..])?;
        let current = &history[n - 1];
        let impulses: Vec<Perturbation> =
            self.perturbations.iter().map(|p| Perturbation { frame: current.frame, ..*p }).collect();
        Ok(self.sim.step(current, Some(&targets), &impulses)?)
    }
}

/// Replays the reference clip exactly, ignoring physics.
pub struct PlaybackDriver<'a> {
    pub clip: &'a MotionClip,
    pub model: &'a CharacterModel,
    pub start: f64,
    steps: usize,
}

impl<'a> PlaybackDriver<'a> {
    pub fn new(clip: &'a MotionClip, model: &'a CharacterModel, start: f64) -> Self {
        PlaybackDriver { clip, model, start, steps: 0 }
    }
}

impl Driver for PlaybackDriver<'_> {
    fn next_state(&mut self, history: &[SimState]) -> Result<SimState, ControlError> {
        self.steps += 1;
        let mut s = reference_state(self.clip, self.model, self.start + self.steps as f64)?;
        s.frame = history[history.len() - 1].frame + 1;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImitationTrial {
    pub clip: usize,
    pub start: f64,
    /// Mean link-position error (m) after each simulated frame.
    pub errors: Vec<f64>,
    pub fell: bool,
}

impl ImitationTrial {
    pub fn mean_error(&self) -> f64 {
        if self.errors.is_empty() {
            return f64::NAN;
        }
        self.errors.iter().sum::<f64>() / self.errors.len() as f64
    }

    pub fn max_error(&self) -> f64 {
        self.errors.iter().copied().fold(0.0, f64::max)
    }

    /// Completed `frames` frames upright with every per-frame error below `limit`.
    pub fn sustained(&self, limit: f64, frames: usize) -> bool {
        !self.fell && self.errors.len() >= frames && self.errors[..frames].iter().all(|&e| e < limit)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImitationReport {
    pub trials: Vec<ImitationTrial>,
    /// Mean and population std of the per-trial mean errors.
    pub mean: f64,
    pub std: f64,
}

impl ImitationReport {
    pub fn from_trials(trials: Vec<ImitationTrial>) -> Self {
        let (mean, std) = mean_std(&trials.iter().map(ImitationTrial::mean_error).collect::<Vec<_>>());
        ImitationReport { trials, mean, std }
    }

    pub fn sustained_fraction(&self, limit: f64, frames: usize) -> f64 {
        if self.trials.is_empty() {
            return 0.0;
        }
        self.trials.iter().filter(|t| t.sustained(limit, frames)).count() as f64 / self.trials.len() as f64
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean Euclidean distance between corresponding link centres.
pub fn link_position_error(model: &CharacterModel, a: &SimState, b: &SimState) -> Result<f64, ControlError> {
    let pa = forward_kinematics(model, a)?;
    let pb = forward_kinematics(model, b)?;
    let sum: f64 = pa.iter().zip(&pb).map(|(x, y)| (x.pos[0] - y.pos[0]).hypot(x.pos[1] - y.pos[1])).sum();
    Ok(sum / pa.len() as f64)
}

/// Reference history ending at `start`, with the trial's pose noise.
fn start_history<R: Rng + ?Sized>(
    clips: &[MotionClip],
    model: &CharacterModel,
    noise: f64,
    rng: &mut R,
) -> Result<(usize, f64, Vec<SimState>), ControlError> {
    let init = sample_init_pose(clips, noise, rng)?;
    let clip = &clips[init.clip];
    let mut history = Vec::with_capacity(OBSERVATION_FRAMES);
    for k in (0..OBSERVATION_FRAMES).rev() {
        let mut s = reference_state(clip, model, init.start - k as f64)?;
        init.noise.apply_state(&mut s);
        history.push(s);
    }
    Ok((init.clip, init.start, history))
}

fn horizon(clip: &MotionClip, start: f64, frames: Option<usize>) -> usize {
    frames.unwrap_or_else(|| if clip.cyclic { clip.len() } else { (clip.span() - start).floor().max(0.0) as usize })
}

fn push_state(history: &mut Vec<SimState>, s: SimState) {
    history.remove(0);
    history.push(s);
}

/// Imitation error of a trained policy over `cfg.trials` episodes.
pub fn imitation_error(bundle: &PolicyBundle, clips: &[MotionClip], cfg: &EvalConfig) -> Result<ImitationReport, ControlError> {
    let sim = Simulator::new(bundle.model.clone(), bundle.sim.clone())?;
    imitation_error_with(&bundle.model, clips, cfg, |_, _| Box::new(PolicyDriver::new(bundle, &sim)))
}

/// Imitation error with any driver; `make(clip, start)` builds one per trial.
pub fn imitation_error_with<'a, F>(
    model: &CharacterModel,
    clips: &'a [MotionClip],
    cfg: &EvalConfig,
    make: F,
) -> Result<ImitationReport, ControlError>
where
    F: Fn(&'a MotionClip, f64) -> Box<dyn Driver + 'a> + Sync,
{
    let allowed = model.allowed_contact_links();
    let trials = par_map(cfg.trials, cfg.threads(), |i| {
        let mut rng = worker_rng(cfg.seed, i);
        let (ci, start, mut history) = start_history(clips, model, cfg.init_noise, &mut rng)?;
        let clip = &clips[ci];
        let mut driver = make(clip, start);
        let mut errors = Vec::new();
        let mut fell = false;
        for k in 1..=horizon(clip, start, cfg.frames) {
            let next = match driver.next_state(&history) {
                Ok(s) => s,
                Err(ControlError::Physics(PhysicsError::Divergence { .. })) => {
                    fell = true;
                    break;
                }
                Err(e) => return Err(e),
            };
            let reference = reference_state(clip, model, start + k as f64)?;
            errors.push(link_position_error(model, &next, &reference)?);
            fell = check_early_termination(model, &next, &allowed);
            push_state(&mut history, next);
            if fell {
                break;
            }
        }
        Ok(ImitationTrial { clip: ci, start, errors, fell })
    })?;
    Ok(ImitationReport::from_trials(trials))
}

/// Gate scores of the target at the moment of a forced switch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateScores {
    pub discriminator: f64,
    pub value: f64,
    pub motion_matching: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionTrial {
    pub warmup: usize,
    pub source_fell: bool,
    pub scores: GateScores,
    /// No early termination within the horizon after the switch.
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub successes: usize,
}

impl ScoreBin {
    pub fn rate(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            self.successes as f64 / self.count as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub threshold: f64,
    /// Fraction of trials whose score clears the threshold.
    pub coverage: f64,
    /// Success rate among those trials; NaN when none clear it.
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionReport {
    pub source: String,
    pub target: String,
    pub trials: Vec<TransitionTrial>,
    /// Success rate by discriminator score, ten equal bins over [-1, 1].
    pub bins: Vec<ScoreBin>,
    pub curve: Vec<ThresholdPoint>,
}

pub const SCORE_BINS: usize = 10;

impl TransitionReport {
    pub fn new(source: &str, target: &str, trials: Vec<TransitionTrial>) -> Self {
        let width = 2.0 / SCORE_BINS as f64;
        let mut bins: Vec<ScoreBin> = (0..SCORE_BINS)
            .map(|b| ScoreBin { lo: -1.0 + b as f64 * width, hi: -1.0 + (b + 1) as f64 * width, count: 0, successes: 0 })
            .collect();
        for t in &trials {
            let b = (((t.scores.discriminator + 1.0) / width).floor().max(0.0) as usize).min(SCORE_BINS - 1);
            bins[b].count += 1;
            bins[b].successes += usize::from(t.success);
        }
        let thresholds: Vec<f64> = (0..=40).map(|k| -1.0 + 0.05 * k as f64).collect();
        let scores: Vec<f64> = trials.iter().map(|t| t.scores.discriminator).collect();
        let curve = threshold_curve(&scores, &trials, &thresholds);
        TransitionReport { source: source.into(), target: target.into(), trials, bins, curve }
    }

    /// Lowest and highest bins holding at least `min_count` trials.
    pub fn extreme_bins(&self, min_count: usize) -> Option<(&ScoreBin, &ScoreBin)> {
        let full: Vec<&ScoreBin> = self.bins.iter().filter(|b| b.count >= min_count.max(1)).collect();
        match (full.first(), full.last()) {
            (Some(lo), Some(hi)) if full.len() >= 2 => Some((lo, hi)),
            _ => None,
        }
    }

    /// Success rate of the `coverage` fraction of trials that score highest
    /// under `gate`.
    pub fn precision_at_coverage(&self, gate: super::GateKind, coverage: f64) -> f64 {
        let mut ranked: Vec<(f64, bool)> = self
            .trials
            .iter()
            .map(|t| {
                let s = match gate {
                    super::GateKind::Discriminator => t.scores.discriminator,
                    super::GateKind::Value => t.scores.value,
                    super::GateKind::MotionMatching => t.scores.motion_matching,
                };
                (s, t.success)
            })
            .collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
        let k = ((coverage * ranked.len() as f64).round() as usize).clamp(1, ranked.len().max(1));
        if ranked.is_empty() {
            return f64::NAN;
        }
        ranked[..k].iter().filter(|r| r.1).count() as f64 / k as f64
    }
}

pub fn threshold_curve(scores: &[f64], trials: &[TransitionTrial], thresholds: &[f64]) -> Vec<ThresholdPoint> {
    thresholds
        .iter()
        .map(|&tau| {
            let pass: Vec<bool> = scores.iter().zip(trials).filter(|(s, _)| **s >= tau).map(|(_, t)| t.success).collect();
            let coverage = if scores.is_empty() { 0.0 } else { pass.len() as f64 / scores.len() as f64 };
            let success_rate =
                if pass.is_empty() { f64::NAN } else { pass.iter().filter(|&&p| p).count() as f64 / pass.len() as f64 };
            ThresholdPoint { threshold: tau, coverage, success_rate }
        })
        .collect()
}

/// Forced switches from `source` to `target` after a random warm-up of
/// 15 to 90 frames. Every gate's score is recorded at the switch frame.
pub fn transition_test(
    source: &PolicyBundle,
    source_clips: &[MotionClip],
    target: &PolicyBundle,
    target_clips: &[MotionClip],
    cfg: &EvalConfig,
) -> Result<TransitionReport, ControlError> {
    if source.model != target.model {
        return Err(ControlError::Config { field: "target".into(), reason: "policies use different characters".into() });
    }
    let model = &source.model;
    let sim = Simulator::new(model.clone(), source.sim.clone())?;
    let matchers: Vec<MotionMatcher> =
        target_clips.iter().map(|c| MotionMatcher::new(c, model)).collect::<Result<_, _>>()?;
    let allowed = model.allowed_contact_links();
    let trials = par_map(cfg.trials, cfg.threads(), |i| {
        let mut rng = worker_rng(cfg.seed, i);
        let (_, _, mut history) = start_history(source_clips, model, cfg.init_noise, &mut rng)?;
        let warmup = rng.random_range(15..=90);
        let mut src = PolicyDriver::new(source, &sim);
        let mut source_fell = false;
        let mut diverged = false;
        for _ in 0..warmup {
            match src.next_state(&history) {
                Ok(s) => {
                    source_fell |= check_early_termination(model, &s, &allowed);
                    push_state(&mut history, s);
                }
                Err(ControlError::Physics(PhysicsError::Divergence { .. })) => {
                    diverged = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        let obs = build_observation_window(&history, model, target.observation)?;
        let state = build_state_window(&history[1..], model)?;
        let scores = GateScores {
            discriminator: switch_score(target, &obs.data)?,
            value: value_switch_score(target, &state.data)?,
            motion_matching: matchers
                .iter()
                .map(|m| motion_matching_score(m, &state.data))
                .fold(f64::NEG_INFINITY, f64::max),
        };
        let mut success = !diverged;
        let mut dst = PolicyDriver::new(target, &sim);
        for _ in 0..TRANSITION_HORIZON {
            if !success {
                break;
            }
            match dst.next_state(&history) {
                Ok(s) => {
                    success = !check_early_termination(model, &s, &allowed);
                    push_state(&mut history, s);
                }
                Err(ControlError::Physics(PhysicsError::Divergence { .. })) => success = false,
                Err(e) => return Err(e),
            }
        }
        Ok(TransitionTrial { warmup, source_fell: source_fell || diverged, scores, success })
    })?;
    Ok(TransitionReport::new(&source.name, &target.name, trials))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    /// Impulse per frame (N·s).
    pub magnitude: f64,
    pub mean: f64,
    pub std: f64,
    /// Frames survived in each trial, capped.
    pub frames: Vec<usize>,
}

/// Frames survived under a random torso impulse of each magnitude every
/// frame. A fall is `FAILURE_STREAK` consecutive frames with disallowed
/// contact; the survival count is the frame where that streak began.
pub fn robustness_sweep(
    bundle: &PolicyBundle,
    clips: &[MotionClip],
    magnitudes: &[f64],
    cfg: &EvalConfig,
) -> Result<Vec<RobustnessRow>, ControlError> {
    let model = &bundle.model;
    let sim = Simulator::new(model.clone(), bundle.sim.clone())?;
    let allowed = model.allowed_contact_links();
    let torso = model.link_index("torso").unwrap_or(0);
    let half = model.links[torso].half_extents;
    let mut rows = Vec::with_capacity(magnitudes.len());
    for (mi, &m) in magnitudes.iter().enumerate() {
        if !(m.is_finite() && m >= 0.0) {
            return Err(ControlError::Config { field: "magnitudes".into(), reason: format!("{m} is not a valid impulse") });
        }
        let seed = cfg.seed.wrapping_add((mi as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let frames = par_map(cfg.trials, cfg.threads(), |i| {
            let mut rng = worker_rng(seed, i);
            let (_, _, mut history) = start_history(clips, model, cfg.init_noise, &mut rng)?;
            let mut driver = PolicyDriver::new(bundle, &sim);
            let mut streak = 0;
            for k in 0..ROBUSTNESS_CAP {
                let phi = rng.random_range(0.0..std::f64::consts::TAU);
                let point = [rng.random_range(-half[0]..=half[0]), rng.random_range(-half[1]..=half[1])];
                driver.perturbations =
                    vec![Perturbation { link: torso, impulse: [m * phi.cos(), m * phi.sin()], frame: 0, local_point: point }];
                match driver.next_state(&history) {
                    Ok(s) => {
                        let down = check_early_termination(model, &s, &allowed);
                        push_state(&mut history, s);
                        streak = if down { streak + 1 } else { 0 };
                        if streak == FAILURE_STREAK {
                            return Ok(k + 1 - FAILURE_STREAK);
                        }
                    }
                    Err(ControlError::Physics(PhysicsError::Divergence { .. })) => return Ok(k - streak),
                    Err(e) => return Err(e),
                }
            }
            Ok(ROBUSTNESS_CAP)
        })?;
        let (mean, std) = mean_std(&frames.iter().map(|&f| f as f64).collect::<Vec<_>>());
        rows.push(RobustnessRow { magnitude: m, mean, std, frames });
    }
    Ok(rows)
}
