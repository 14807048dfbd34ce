use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::policy::{sample_actions, ActorCritic};
use super::RlError;
use crate::adversarial::DiscriminatorEnsemble;
use crate::motion::{
    build_observation_window, build_state_window, reference_state, sample_init_pose, FeatureKind, MotionClip,
    PoseNoise, ReferenceSampler, STATE_FRAMES,
};
use crate::nn::Tensor;
use crate::physics::{check_early_termination, CharacterModel, SimState, Simulator};

/// Why a stretch of transitions ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpisodeEnd {
    /// Disallowed ground contact (or numerical failure); absorbing.
    Early,
    /// Frame cap reached on a cyclic clip.
    Overtime,
    /// The end of a non-cyclic clip.
    ClipEnd,
    /// Cut by the end of the rollout; the episode continues next iteration.
    Segment,
}

impl EpisodeEnd {
    pub fn is_terminal(self) -> bool {
        self == EpisodeEnd::Early
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    pub next_state: Vec<f64>,
    /// Observation window ending at the post-step frame (the reward input).
    pub observation: Vec<f64>,
    /// Matching reference window for the discriminator buffer.
    pub reference: Vec<f64>,
    pub end: Option<EpisodeEnd>,
    /// `V(next_state)` for truncated ends, 0 otherwise.
    pub bootstrap: f64,
}

/// Everything a worker needs besides its own state; shared read-only.
#[derive(Debug, Clone)]
pub struct EnvContext<'a> {
    pub sim: &'a Simulator,
    pub clips: &'a [MotionClip],
    pub sampler: &'a ReferenceSampler,
    pub observation: FeatureKind,
    pub init_noise: f64,
    pub overtime_limit: usize,
    pub allowed_contacts: Vec<usize>,
}

impl<'a> EnvContext<'a> {
    pub fn new(
        sim: &'a Simulator,
        clips: &'a [MotionClip],
        sampler: &'a ReferenceSampler,
        observation: FeatureKind,
        init_noise: f64,
        overtime_limit: usize,
    ) -> Self {
        let allowed_contacts = sim.model().allowed_contact_links();
        EnvContext { sim, clips, sampler, observation, init_noise, overtime_limit, allowed_contacts }
    }

    pub fn model(&self) -> &CharacterModel {
        self.sim.model()
    }
}

/// Result of one simulated control frame.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reference: Vec<f64>,
    pub next_state: Vec<f64>,
    pub end: Option<EpisodeEnd>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub clip: usize,
    pub length: usize,
    pub total_reward: f64,
    pub end: EpisodeEnd,
}

/// One simulated character with its own random stream.
#[derive(Debug, Clone)]
pub struct Worker {
    pub id: usize,
    pub rng: ChaCha8Rng,
    /// The last few states, oldest first; the last one is current.
    history: Vec<SimState>,
    clip: usize,
    start: f64,
    noise: PoseNoise,
    steps: usize,
    total_reward: f64,
}

/// Stream `id + 1` of the master seed, so workers never share draws.
pub fn worker_rng(seed: u64, id: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id as u64 + 1);
    rng
}

impl Worker {
    pub fn new(id: usize, seed: u64, ctx: &EnvContext) -> Result<Self, RlError> {
        let nj = ctx.model().num_joints();
        let mut w = Worker {
            id,
            rng: worker_rng(seed, id),
            history: Vec::new(),
            clip: 0,
            start: 0.0,
            noise: PoseNoise::zero(nj),
            steps: 0,
            total_reward: 0.0,
        };
        w.reset(ctx)?;
        Ok(w)
    }

    /// New episode from a random reference pose. The frames before the start
    /// are taken from the reference so the first state window is complete.
    pub fn reset(&mut self, ctx: &EnvContext) -> Result<(), RlError> {
        let init = sample_init_pose(ctx.clips, ctx.init_noise, &mut self.rng)?;
        let clip = &ctx.clips[init.clip];
        self.history.clear();
        for k in (0..STATE_FRAMES).rev() {
            let mut s = reference_state(clip, ctx.model(), init.start - k as f64)?;
            init.noise.apply_state(&mut s);
            self.history.push(s);
        }
        self.clip = init.clip;
        self.start = init.start;
        self.noise = init.noise;
        self.steps = 0;
        self.total_reward = 0.0;
        Ok(())
    }

    pub fn current(&self) -> &SimState {
        self.history.last().expect("history is never empty")
    }

    pub fn clip(&self) -> usize {
        self.clip
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn state_window(&self, ctx: &EnvContext) -> Result<Vec<f64>, RlError> {
        Ok(build_state_window(&self.history, ctx.model())?.data)
    }

    /// Simulates one control frame with PD targets `action`.
    ///
    /// `hook` may edit the post-step state before termination is checked.
    pub fn advance(
        &mut self,
        ctx: &EnvContext,
        action: &[f64],
        hook: Option<&mut (dyn FnMut(usize, &mut SimState) + '_)>,
    ) -> Result<StepOutcome, RlError> {
        let (mut next, diverged) = match ctx.sim.step(self.current(), Some(action), &[]) {
            Ok(s) => (s, false),
            Err(crate::physics::PhysicsError::Divergence { .. }) => (self.current().clone(), true),
            Err(e) => return Err(e.into()),
        };
        self.steps += 1;
        if let Some(h) = hook {
            h(self.steps, &mut next);
        }
        let mut frames: Vec<SimState> = self.history.clone();
        frames.push(next.clone());
        let observation = build_observation_window(&frames, ctx.model(), ctx.observation)?.data;
        let reference = ctx.sampler.sample(ctx.clips, ctx.model(), Some(&self.noise), &mut self.rng)?.0.data;
        let clip = &ctx.clips[self.clip];
        let end = if diverged || check_early_termination(ctx.model(), &next, &ctx.allowed_contacts) {
            Some(EpisodeEnd::Early)
        } else if clip.cyclic && self.steps >= ctx.overtime_limit {
            Some(EpisodeEnd::Overtime)
        } else if !clip.cyclic && self.start + self.steps as f64 >= clip.span() {
            Some(EpisodeEnd::ClipEnd)
        } else {
            None
        };
        self.history.remove(0);
        self.history.push(next);
        let next_state = self.state_window(ctx)?;
        Ok(StepOutcome { observation, reference, next_state, end })
    }

    fn finish(&self, end: EpisodeEnd) -> EpisodeSummary {
        EpisodeSummary { clip: self.clip, length: self.steps, total_reward: self.total_reward, end }
    }
}

/// Transitions of one rollout, in worker order, plus finished episodes.
#[derive(Debug, Clone, Default)]
pub struct Rollout {
    pub transitions: Vec<Vec<Transition>>,
    pub episodes: Vec<EpisodeSummary>,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.transitions.iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.transitions.iter().flatten()
    }
}

fn advance_all(
    ctx: &EnvContext,
    workers: &mut [Worker],
    actions: &Tensor,
    threads: usize,
) -> Result<Vec<StepOutcome>, RlError> {
    let step = |w: &mut Worker, row: usize| w.advance(ctx, actions.row(row).as_slice().expect("row-major actions"), None);
    if threads <= 1 || workers.len() <= 1 {
        return workers.iter_mut().enumerate().map(|(i, w)| step(w, i)).collect();
    }
    let chunk = workers.len().div_ceil(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = workers
            .chunks_mut(chunk)
            .enumerate()
            .map(|(c, ws)| {
                scope.spawn(move || {
                    ws.iter_mut().enumerate().map(|(k, w)| step(w, c * chunk + k)).collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker thread panicked")).collect()
    })
}

/// Steps every worker `steps` times in lockstep. Actions and rewards are
/// computed batched across workers; physics runs on up to `threads` threads.
/// Results depend only on the seeds, never on the thread count.
pub fn collect_rollout(
    ctx: &EnvContext,
    workers: &mut [Worker],
    ac: &ActorCritic,
    ens: &DiscriminatorEnsemble,
    steps: usize,
    deterministic: bool,
    threads: usize,
) -> Result<Rollout, RlError> {
    let mut out = Rollout { transitions: vec![Vec::new(); workers.len()], episodes: Vec::new() };
    for _ in 0..steps {
        let states: Vec<Vec<f64>> = workers.iter().map(|w| w.state_window(ctx)).collect::<Result<_, _>>()?;
        let refs: Vec<&[f64]> = states.iter().map(|s| s.as_slice()).collect();
        let means = ac.means(&refs)?;
        let actions = if deterministic {
            means.clone()
        } else {
            let mut rngs: Vec<&mut ChaCha8Rng> = workers.iter_mut().map(|w| &mut w.rng).collect();
            sample_actions(&means, &ac.log_std, &mut rngs)
        };
        let log_probs = ac.log_probs(&means, &actions)?;
        let values = ac.values(&refs)?;
        let outcomes = advance_all(ctx, workers, &actions, threads)?;
        let obs: Vec<&[f64]> = outcomes.iter().map(|o| o.observation.as_slice()).collect();
        let rewards = ens.rewards_batch(&obs)?;
        for (i, (o, state)) in outcomes.into_iter().zip(states).enumerate() {
            let w = &mut workers[i];
            w.total_reward += rewards[i];
            out.transitions[i].push(Transition {
                state,
                action: actions.row(i).to_vec(),
                log_prob: log_probs[i],
                reward: rewards[i],
                value: values[i],
                next_state: o.next_state,
                observation: o.observation,
                reference: o.reference,
                end: o.end,
                bootstrap: 0.0,
            });
            if let Some(end) = o.end {
                out.episodes.push(w.finish(end));
                w.reset(ctx)?;
            }
        }
    }
    for ts in &mut out.transitions {
        if let Some(last) = ts.last_mut() {
            if last.end.is_none() {
                last.end = Some(EpisodeEnd::Segment);
            }
        }
    }
    let cut: Vec<(usize, usize)> = out
        .transitions
        .iter()
        .enumerate()
        .flat_map(|(w, ts)| {
            ts.iter()
                .enumerate()
                .filter(|(_, t)| matches!(t.end, Some(e) if !e.is_terminal()))
                .map(move |(k, _)| (w, k))
        })
        .collect();
    let next: Vec<&[f64]> = cut.iter().map(|&(w, k)| out.transitions[w][k].next_state.as_slice()).collect();
    let boot = ac.values(&next)?;
    for (&(w, k), v) in cut.iter().zip(boot) {
        out.transitions[w][k].bootstrap = v;
    }
    Ok(out)
}

/// Runs a single episode to its natural end with one worker.
pub fn run_episode(
    ctx: &EnvContext,
    worker: &mut Worker,
    ac: &ActorCritic,
    ens: &DiscriminatorEnsemble,
    deterministic: bool,
    mut hook: Option<&mut (dyn FnMut(usize, &mut SimState) + '_)>,
) -> Result<(Vec<Transition>, EpisodeSummary), RlError> {
    let mut transitions = Vec::new();
    loop {
        let state = worker.state_window(ctx)?;
        let means = ac.means(&[&state])?;
        let actions = if deterministic {
            means.clone()
        } else {
            sample_actions(&means, &ac.log_std, &mut [&mut worker.rng])
        };
        let log_prob = ac.log_probs(&means, &actions)?[0];
        let value = ac.values(&[&state])?[0];
        let action = actions.row(0).to_vec();
        let o = worker.advance(ctx, &action, hook.as_deref_mut())?;
        let reward = ens.reward(&o.observation)?;
        worker.total_reward += reward;
        let bootstrap = match o.end {
            Some(e) if !e.is_terminal() => ac.values(&[&o.next_state])?[0],
            _ => 0.0,
        };
        let end = o.end;
        transitions.push(Transition {
            state,
            action,
            log_prob,
            reward,
            value,
            next_state: o.next_state,
            observation: o.observation,
            reference: o.reference,
            end,
            bootstrap,
        });
        if let Some(e) = end {
            let summary = worker.finish(e);
            worker.reset(ctx)?;
            return Ok((transitions, summary));
        }
    }
}
