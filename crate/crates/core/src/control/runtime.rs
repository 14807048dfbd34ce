use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    motion_matching_score, switch_score, value_switch_score, ControlError, GateKind, MotionMatcher, PolicyBundle,
    SwitchConfig,
};
use crate::motion::{build_observation_window, build_state_window, reference_state, MotionClip, OBSERVATION_FRAMES};
use crate::physics::{check_early_termination, Perturbation, SimState, Simulator};

#[derive(Debug, Clone)]
struct Entry {
    bundle: PolicyBundle,
    clips: Vec<MotionClip>,
    matchers: Vec<MotionMatcher>,
}

/// Named policies available to the runtime. Every bundle must use the same
/// character.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    entries: Vec<Entry>,
}

impl Registry {
    pub fn new() -> Self {
        Registry::default()
    }

    /// Adds a policy with the clips it was trained on (needed only by the
    /// motion-matching gate and for clip-based resets). Replaces an entry of
    /// the same name.
    pub fn insert(&mut self, bundle: PolicyBundle, clips: Vec<MotionClip>) -> Result<(), ControlError> {
        if let Some(first) = self.entries.first() {
            if first.bundle.model != bundle.model {
                return Err(ControlError::Config {
                    field: bundle.name.clone(),
                    reason: "policy was trained on a different character".into(),
                });
            }
        }
        bundle.validate()?;
        let matchers = clips.iter().map(|c| MotionMatcher::new(c, &bundle.model)).collect::<Result<_, _>>()?;
        let entry = Entry { bundle, clips, matchers };
        match self.entries.iter().position(|e| e.bundle.name == entry.bundle.name) {
            Some(i) => self.entries[i] = entry,
            None => self.entries.push(entry),
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.bundle.name.clone()).collect()
    }

    pub fn index(&self, name: &str) -> Result<usize, ControlError> {
        self.entries
            .iter()
            .position(|e| e.bundle.name == name)
            .ok_or_else(|| ControlError::UnknownPolicy { name: name.to_string(), valid: self.names() })
    }

    pub fn bundle(&self, i: usize) -> &PolicyBundle {
        &self.entries[i].bundle
    }

    pub fn clips(&self, i: usize) -> &[MotionClip] {
        &self.entries[i].clips
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RuntimeEvent {
    Requested { target: String },
    /// A newer request replaced this one before it was served.
    Superseded { target: String },
    Switched { from: String, to: String, score: f64 },
    /// The response window ran out without the gate opening.
    Rejected { target: String, waited: usize },
    Recovered { from: String, to: String, score: f64 },
    Fell,
}

/// What happened during one control frame.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Telemetry {
    pub frame: u64,
    pub active: String,
    pub pending: Option<String>,
    /// Gate scores computed this frame, by policy.
    pub scores: BTreeMap<String, f64>,
    pub events: Vec<RuntimeEvent>,
    pub targets: Vec<f64>,
    pub state: SimState,
}

#[derive(Debug, Clone)]
struct Pending {
    target: usize,
    age: usize,
}

/// The live character and the switching state machine.
#[derive(Debug, Clone)]
pub struct Runtime {
    registry: Registry,
    config: SwitchConfig,
    sim: Simulator,
    /// Last five states, oldest first.
    history: Vec<SimState>,
    active: usize,
    since_activation: usize,
    pending: Option<Pending>,
    recovery: Option<usize>,
    fallen: bool,
    queued: Vec<RuntimeEvent>,
}

impl Runtime {
    /// Starts `policy` from `history` (at least five states, oldest first).
    pub fn new(registry: Registry, config: SwitchConfig, policy: &str, history: Vec<SimState>) -> Result<Self, ControlError> {
        config.validate()?;
        if registry.is_empty() {
            return Err(ControlError::UnknownPolicy { name: policy.into(), valid: vec![] });
        }
        let active = registry.index(policy)?;
        let recovery = config.recovery.as_ref().map(|r| registry.index(&r.policy)).transpose()?;
        if config.gate == GateKind::MotionMatching {
            if let Some(i) = (0..registry.len()).find(|&i| registry.entries[i].matchers.is_empty()) {
                return Err(ControlError::Config {
                    field: registry.bundle(i).name.clone(),
                    reason: "the motion-matching gate needs the policy's clips".into(),
                });
            }
        }
        let b = registry.bundle(active);
        let sim = Simulator::new(b.model.clone(), b.sim.clone())?;
        if history.len() < OBSERVATION_FRAMES {
            return Err(ControlError::Config {
                field: "history".into(),
                reason: format!("need {OBSERVATION_FRAMES} states, got {}", history.len()),
            });
        }
        let history = history[history.len() - OBSERVATION_FRAMES..].to_vec();
        Ok(Runtime {
            registry,
            config,
            sim,
            history,
            active,
            since_activation: 0,
            pending: None,
            recovery,
            fallen: false,
            queued: Vec::new(),
        })
    }

    /// Starts `policy` at frame `start` of the first clip registered with it.
    pub fn from_clip(registry: Registry, config: SwitchConfig, policy: &str, start: f64) -> Result<Self, ControlError> {
        let i = registry.index(policy)?;
        let clip = registry.clips(i).first().ok_or_else(|| ControlError::Config {
            field: policy.into(),
            reason: "no clip registered to start from".into(),
        })?;
        let model = &registry.bundle(i).model;
        let history = (0..OBSERVATION_FRAMES)
            .rev()
            .map(|k| reference_state(clip, model, start - k as f64))
            .collect::<Result<Vec<_>, _>>()?;
        Runtime::new(registry, config, policy, history)
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn config(&self) -> &SwitchConfig {
        &self.config
    }

    pub fn set_config(&mut self, config: SwitchConfig) -> Result<(), ControlError> {
        config.validate()?;
        self.recovery = config.recovery.as_ref().map(|r| self.registry.index(&r.policy)).transpose()?;
        self.config = config;
        Ok(())
    }

    pub fn active(&self) -> &str {
        &self.registry.bundle(self.active).name
    }

    pub fn pending(&self) -> Option<&str> {
        self.pending.as_ref().map(|p| self.registry.bundle(p.target).name.as_str())
    }

    /// Pending target and the frames it has waited so far.
    pub fn pending_status(&self) -> Option<(String, usize)> {
        self.pending.as_ref().map(|p| (self.name(p.target), p.age))
    }

    /// Gate score of every registered policy, by name.
    pub fn all_scores(&self) -> Result<BTreeMap<String, f64>, ControlError> {
        (0..self.registry.len()).map(|i| Ok((self.name(i), self.score(i)?))).collect()
    }

    pub fn simulator(&self) -> &Simulator {
        &self.sim
    }

    pub fn state(&self) -> &SimState {
        self.history.last().expect("history is never empty")
    }

    pub fn history(&self) -> &[SimState] {
        &self.history
    }

    pub fn frames_since_activation(&self) -> usize {
        self.since_activation
    }

    /// Asks for a switch to `target`; served by later calls to [`Runtime::step`].
    pub fn request(&mut self, target: &str) -> Result<(), ControlError> {
        let target = self.registry.index(target)?;
        if let Some(old) = self.pending.take() {
            self.queued.push(RuntimeEvent::Superseded { target: self.name(old.target) });
        }
        self.queued.push(RuntimeEvent::Requested { target: self.name(target) });
        self.pending = Some(Pending { target, age: 0 });
        Ok(())
    }

    pub fn cancel(&mut self) {
        self.pending = None;
    }

    /// Replaces the live state, e.g. after a reset from the user interface.
    pub fn reset(&mut self, policy: &str, history: Vec<SimState>) -> Result<(), ControlError> {
        let fresh = Runtime::new(self.registry.clone(), self.config.clone(), policy, history)?;
        *self = fresh;
        Ok(())
    }

    fn name(&self, i: usize) -> String {
        self.registry.bundle(i).name.clone()
    }

    /// Gate score of policy `i` for the current history.
    pub fn score(&self, i: usize) -> Result<f64, ControlError> {
        let entry = &self.registry.entries[i];
        let model = self.sim.model();
        match self.config.gate {
            GateKind::Discriminator => {
                let w = build_observation_window(&self.history, model, entry.bundle.observation)?;
                switch_score(&entry.bundle, &w.data)
            }
            GateKind::Value => {
                let w = build_state_window(&self.history[1..], model)?;
                value_switch_score(&entry.bundle, &w.data)
            }
            GateKind::MotionMatching => {
                let w = build_state_window(&self.history[1..], model)?;
                Ok(entry.matchers.iter().map(|m| motion_matching_score(m, &w.data)).fold(f64::NEG_INFINITY, f64::max))
            }
        }
    }

    fn activate(&mut self, target: usize) {
        self.active = target;
        self.since_activation = 0;
    }

    /// One control frame: gates, then the active policy acts and the
    /// simulator advances. Perturbations apply at the current frame.
    pub fn step(&mut self, perturbations: &[Perturbation]) -> Result<Telemetry, ControlError> {
        let mut events = std::mem::take(&mut self.queued);
        let mut scores = BTreeMap::new();
        self.since_activation += 1;
        if let Some(p) = &mut self.pending {
            p.age += 1;
        }
        let active_name = self.name(self.active);
        let can_leave = self.since_activation >= self.config.delay_for(&active_name);
        let mut score_of = |rt: &Runtime, i: usize| -> Result<f64, ControlError> {
            let s = rt.score(i)?;
            scores.insert(rt.name(i), s);
            Ok(s)
        };

        let mut switched = false;
        if let (Some(rec), Some(rc)) = (self.recovery, self.config.recovery.clone()) {
            if rec != self.active && can_leave {
                let own = score_of(self, self.active)?;
                let s = score_of(self, rec)?;
                if s >= rc.threshold && own < self.config.threshold_for(&active_name) {
                    events.push(RuntimeEvent::Recovered { from: active_name.clone(), to: rc.policy.clone(), score: s });
                    let back = self.active;
                    self.activate(rec);
                    switched = true;
                    // go back to what was running once the gate allows it
                    if let Some(old) = self.pending.take() {
                        events.push(RuntimeEvent::Superseded { target: self.name(old.target) });
                    }
                    events.push(RuntimeEvent::Requested { target: active_name.clone() });
                    self.pending = Some(Pending { target: back, age: 0 });
                }
            }
        }
        if !switched {
            if let Some(p) = self.pending.clone() {
                let target_name = self.name(p.target);
                if p.target == self.active {
                    self.pending = None;
                } else if p.age > self.config.response_window {
                    events.push(RuntimeEvent::Rejected { target: target_name, waited: p.age - 1 });
                    self.pending = None;
                } else if can_leave {
                    let s = score_of(self, p.target)?;
                    if s >= self.config.threshold_for(&target_name) {
                        events.push(RuntimeEvent::Switched { from: active_name.clone(), to: target_name, score: s });
                        self.activate(p.target);
                        self.pending = None;
                    }
                }
            }
        }

        let bundle = self.registry.bundle(self.active);
        let targets = bundle.act_on_history(&self.history[1..])?;
        let current = self.state();
        let impulses: Vec<Perturbation> = perturbations.iter().map(|p| Perturbation { frame: current.frame, ..*p }).collect();
        let next = self.sim.step(current, Some(&targets), &impulses)?;
        let fell = check_early_termination(self.sim.model(), &next, &self.sim.model().allowed_contact_links());
        if fell && !self.fallen {
            events.push(RuntimeEvent::Fell);
        }
        self.fallen = fell;
        self.history.remove(0);
        self.history.push(next);
        Ok(Telemetry {
            frame: self.state().frame,
            active: self.name(self.active),
            pending: self.pending().map(str::to_string),
            scores,
            events,
            targets,
            state: self.state().clone(),
        })
    }
}
