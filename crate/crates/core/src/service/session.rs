use super::wire::{
    parse_client_message, ClientMessage, EventKind, LinkInfo, PendingInfo, ServerMessage, WIRE_VERSION,
};
use crate::control::{ControlError, Runtime, RuntimeEvent};
use crate::motion::{reference_state, OBSERVATION_FRAMES};
use crate::physics::{forward_kinematics, Perturbation, PhysicsError, SimState};

/// The live character driven by viewer commands. Pure logic; the server
/// supplies the clock and the sockets.
#[derive(Debug, Clone)]
pub struct Session {
    runtime: Runtime,
    initial_policy: String,
    initial_history: Vec<SimState>,
    paused: bool,
    impulses: Vec<Perturbation>,
}

impl Session {
    pub fn new(runtime: Runtime) -> Self {
        Session {
            initial_policy: runtime.active().to_string(),
            initial_history: runtime.history().to_vec(),
            runtime,
            paused: false,
            impulses: Vec::new(),
        }
    }

    pub fn runtime(&self) -> &Runtime {
        &self.runtime
    }

    pub fn paused(&self) -> bool {
        self.paused
    }

    pub fn frame(&self) -> u64 {
        self.runtime.state().frame
    }

    pub fn hello(&self, driver: bool) -> ServerMessage {
        let reg = self.runtime.registry();
        let cfg = self.runtime.config();
        let model = self.runtime.simulator().model();
        ServerMessage::Hello {
            version: WIRE_VERSION,
            policies: reg.names(),
            active: self.runtime.active().to_string(),
            thresholds: reg.names().into_iter().map(|n| (n.clone(), cfg.threshold_for(&n))).collect(),
            response_window: cfg.response_window,
            driver,
            fps: self.runtime.simulator().config().control_hz,
            links: model.links.iter().map(|l| LinkInfo { name: l.name.clone(), half_extents: l.half_extents }).collect(),
        }
    }

    /// Parses and applies one client message; the replies go to its sender.
    pub fn handle_text(&mut self, text: &str) -> Vec<ServerMessage> {
        match parse_client_message(text) {
            Ok(msg) => self.apply(msg),
            Err(e) => vec![ServerMessage::error(e)],
        }
    }

    pub fn apply(&mut self, msg: ClientMessage) -> Vec<ServerMessage> {
        let t = self.frame();
        let unknown = |e: ControlError| match e {
            ControlError::UnknownPolicy { ref valid, .. } => ServerMessage::Error { message: e.to_string(), valid: valid.clone() },
            e => ServerMessage::error(e.to_string()),
        };
        match msg {
            ClientMessage::RequestSwitch { target } => match self.runtime.request(&target) {
                Ok(()) => vec![],
                Err(e) => vec![unknown(e)],
            },
            ClientMessage::Perturb { impulse, link } => {
                let model = self.runtime.simulator().model();
                let name = link.unwrap_or_else(|| "torso".into());
                match model.link_index(&name) {
                    Some(link) => {
                        self.impulses.push(Perturbation { link, impulse, frame: 0, local_point: [0.0, 0.0] });
                        vec![ev(t, EventKind::Perturbed, None, Some(name), None, None)]
                    }
                    None => {
                        let valid = model.links.iter().map(|l| l.name.clone()).collect();
                        vec![ServerMessage::Error { message: format!("unknown link `{name}`"), valid }]
                    }
                }
            }
            ClientMessage::Pause => {
                self.paused = true;
                vec![ServerMessage::event(t, EventKind::Paused)]
            }
            ClientMessage::Resume => {
                self.paused = false;
                vec![ServerMessage::event(t, EventKind::Resumed)]
            }
            ClientMessage::Reset { policy } => {
                let policy = policy.unwrap_or_else(|| self.initial_policy.clone());
                match self.reset_to(&policy) {
                    Ok(()) => vec![ev(0, EventKind::Reset, None, Some(policy), None, None)],
                    Err(e) => vec![unknown(e)],
                }
            }
        }
    }

    fn reset_to(&mut self, policy: &str) -> Result<(), ControlError> {
        let reg = self.runtime.registry();
        let i = reg.index(policy)?;
        let history = match reg.clips(i).first() {
            Some(clip) if policy != self.initial_policy => (0..OBSERVATION_FRAMES)
                .rev()
                .map(|k| reference_state(clip, &reg.bundle(i).model, -(k as f64)))
                .collect::<Result<Vec<_>, _>>()?,
            _ => self.initial_history.clone(),
        };
        self.impulses.clear();
        self.runtime.reset(policy, history)
    }

    /// Advances one frame (unless paused) and returns what to broadcast. A
    /// diverged simulation is reset and reported, never propagated.
    pub fn tick(&mut self) -> Vec<ServerMessage> {
        let mut out = Vec::new();
        if !self.paused {
            let frame = self.frame();
            let impulses: Vec<Perturbation> =
                self.impulses.drain(..).map(|p| Perturbation { frame, ..p }).collect();
            match self.runtime.step(&impulses) {
                Ok(tel) => {
                    for e in tel.events {
                        out.push(event_message(tel.frame, e));
                    }
                }
                Err(e) => {
                    let diverged = matches!(e, ControlError::Physics(PhysicsError::Divergence { .. }));
                    out.push(ServerMessage::error(format!("{e}; resetting")));
                    let policy = self.initial_policy.clone();
                    if let Err(e) = self.reset_to(&policy) {
                        out.push(ServerMessage::error(format!("reset failed: {e}")));
                    } else if !diverged {
                        log::warn!("control step failed: {e}");
                    }
                    out.push(ev(0, EventKind::Reset, None, Some(policy), None, None));
                }
            }
        }
        out.push(self.frame_message());
        out
    }

    pub fn frame_message(&self) -> ServerMessage {
        let rt = &self.runtime;
        let model = rt.simulator().model();
        let links = forward_kinematics(model, rt.state())
            .map(|poses| poses.iter().map(|p| [p.pos[0], p.pos[1], p.angle]).collect())
            .unwrap_or_default();
        let scores = rt.all_scores().unwrap_or_default();
        ServerMessage::Frame {
            t: self.frame(),
            links,
            active: rt.active().to_string(),
            scores,
            pending: rt.pending_status().map(|(target, age)| PendingInfo {
                target,
                age,
                window: rt.config().response_window,
            }),
            paused: self.paused,
        }
    }
}

fn event_message(t: u64, e: RuntimeEvent) -> ServerMessage {
    let base = |kind| ServerMessage::event(t, kind);
    match e {
        RuntimeEvent::Requested { target } => ev(t, EventKind::Requested, None, Some(target), None, None),
        RuntimeEvent::Superseded { target } => ev(t, EventKind::Superseded, None, Some(target), None, None),
        RuntimeEvent::Switched { from, to, score } => {
            ev(t, EventKind::Switched, Some(from), Some(to), Some(score), None)
        }
        RuntimeEvent::Rejected { target, waited } => {
            ev(t, EventKind::Rejected, None, Some(target), None, Some(waited as u64))
        }
        RuntimeEvent::Recovered { from, to, score } => {
            ev(t, EventKind::Recovered, Some(from), Some(to), Some(score), None)
        }
        RuntimeEvent::Fell => base(EventKind::Fell),
    }
}

fn ev(t: u64, kind: EventKind, from: Option<String>, to: Option<String>, score: Option<f64>, count: Option<u64>) -> ServerMessage {
    ServerMessage::Event { t, kind, from, to, score, count }
}
