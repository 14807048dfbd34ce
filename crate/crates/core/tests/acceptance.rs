//! One PASS/FAIL line per acceptance criterion.
//!
//! Criteria 6 to 8 grade the desk training runs under `runs/` (produced by
//! `runs.sh`). Missing or unmet runs print FAIL with the reason; they do not
//! abort the suite, since the artifacts live outside the test.

mod common;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use advmimic::adversarial::*;
use advmimic::control::{imitation_error, transition_test, EvalConfig, Registry, Runtime, SwitchConfig};
use advmimic::motion::{FeatureKind, MotionClip, PoseNoise, ReferenceSampler};
use advmimic::nn::{
    grad_norm_penalty, grad_norm_penalty_backward, grad_norm_penalty_finite_difference, Graph, Init, LayerSpec,
    Network, Tensor,
};
use advmimic::physics::*;
use advmimic::rl::{gae, PolicyBundle, RlError, TrainEvent, TrainHooks, Trainer};
use advmimic::service::wire::{EventKind, ServerMessage};
use advmimic::service::{load_bundle, save_bundle, serve, Checkpoint, CheckpointMeta, RunConfig, ServerOptions, Session};
use common::client::*;
use common::oracles::*;
use common::{tiny_bundle, tiny_config, tiny_toml};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tungstenite::Message;

static SERIAL: Mutex<()> = Mutex::new(());

fn report(id: u32, name: &str, outcome: Result<String, String>) -> bool {
    let (tag, detail, ok) = match outcome {
        Ok(d) => ("PASS", d, true),
        Err(d) => ("FAIL", d, false),
    };
    // written past the test harness's capture so the lines always show
    let mut out = std::io::stdout().lock();
    writeln!(out, "{tag} [{id:02}] {name}: {detail}").unwrap();
    out.flush().unwrap();
    ok
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn repo_root() -> PathBuf {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    root.canonicalize().unwrap_or(root)
}

#[test]
fn c01_loss_and_reward_exactness() {
    let _g = SERIAL.lock().unwrap();
    let run = || -> Result<String, String> {
        for (a, r, want) in [(-1.0, 1.0, 0.0), (0.0, 0.0, 2.0), (-2.0, 2.0, 0.0)] {
            let v = hinge_loss_value(&[a], &[r]);
            check((v - want).abs() < 1e-12, || format!("hinge({a}, {r}) = {v}, want {want}"))?;
        }
        let mut g = Graph::new();
        let a = g.input(Tensor::from_elem((1, 1), -2.0));
        let r = g.input(Tensor::from_elem((1, 1), 2.0));
        let l = hinge_loss(&mut g, a, r).map_err(|e| e.to_string())?;
        let total = g.sum_all(l);
        let grads = g.backward(total, &[a, r]).map_err(|e| e.to_string())?;
        check(grads.iter().all(|t| t.iter().all(|&v| v == 0.0)), || "saturated hinge has gradient".into())?;

        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let net = Network::new(6, &[LayerSpec::Dense(4)], Init::TruncatedNormal { std: 0.8 }, &mut rng).unwrap();
            let x = Tensor::from_shape_simple_fn((3, 6), || rng.random_range(-2.0..2.0));
            let w = net.params()[0].value.clone();
            for head in 0..4 {
                let norm = w.column(head).iter().map(|v| v * v).sum::<f64>().sqrt();
                let p = grad_norm_penalty(&net, &x, 3, head).map_err(|e| e.to_string())?;
                worst = worst.max((p - (norm - 1.0).powi(2)).abs());
            }
        }
        check(worst < 1e-12, || format!("linear-head penalty off by {worst:e}"))?;

        for (s, want) in [(vec![0.5, 2.0, -3.0, -0.25], 0.0625), (vec![3.0, 3.0], 1.0), (vec![-0.5], -0.5)] {
            let m = clipped_mean(&s);
            check((m - want).abs() < 1e-12, || format!("clipped mean of {s:?} = {m}"))?;
        }
        let cfg = GanConfig { ensemble_size: 4, gru_units: 4, hidden_units: vec![4], ..GanConfig::default() };
        let mut ens = DiscriminatorEnsemble::new(&cfg, 3, &mut rng).unwrap();
        constant_output(ens.net_mut(), &[0.5, 2.0, -3.0, -0.25]);
        let r = ens.reward(&vec![0.3; ens.window_len()]).map_err(|e| e.to_string())?;
        check((r - 0.0625).abs() < 1e-12, || format!("ensemble reward {r}"))?;
        Ok(format!("hinge cases exact, penalty closed form within {worst:.1e}, clipped means exact"))
    };
    assert!(report(1, "loss/reward exactness", run()));
}

#[test]
fn c02_gradient_correctness() {
    let _g = SERIAL.lock().unwrap();
    let run = || -> Result<String, String> {
        let mut first: f64 = 0.0;
        for seed in 0..100 {
            let net = small_net(seed);
            let x = random_input(seed, STEPS * BATCH, INPUT);
            let coef = random_input(seed + 1000, BATCH, 2);
            let exact = analytic_gradient(&net, &x, &coef);
            let fd = numeric_gradient(&net, |n| weighted_loss(n, &x, &coef), 1e-5);
            first = first.max(relative_error(&exact, &fd));
        }
        check(first < 1e-5, || format!("first-order relative error {first:e}"))?;
        let mut second: f64 = 0.0;
        for seed in 0..50 {
            let net = small_net(seed + 500);
            let x = random_input(seed + 500, STEPS * BATCH, INPUT);
            let head = (seed % 2) as usize;
            let (_, exact) = grad_norm_penalty_backward(&net, &x, BATCH, head).map_err(|e| e.to_string())?;
            let (_, fd) = grad_norm_penalty_finite_difference(&net, &x, BATCH, head, 1e-5).map_err(|e| e.to_string())?;
            second = second.max(relative_error(&exact, &fd));
        }
        check(second < 1e-4, || format!("penalty gradient relative error {second:e}"))?;
        Ok(format!("max relative error {first:.1e} over 100 GRU nets, {second:.1e} over 50 penalty nets"))
    };
    assert!(report(2, "gradient correctness", run()));
}

#[test]
fn c03_gae_oracle() {
    let _g = SERIAL.lock().unwrap();
    let run = || -> Result<String, String> {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let n = rng.random_range(1..=20);
            let (gamma, lambda) = (rng.random_range(0.0..=1.0), rng.random_range(0.0..=1.0));
            let rewards: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let values: Vec<f64> = (0..=n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let dones: Vec<bool> = (0..n).map(|_| rng.random_bool(0.2)).collect();
            let (adv, _) = gae(&rewards, &values, &dones, gamma, lambda);
            let oracle = gae_brute_force(&rewards, &values, &dones, gamma, lambda);
            worst = adv.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
        }
        check(worst < 1e-12, || format!("max deviation {worst:e}"))?;
        Ok(format!("1000 cases, max deviation {worst:.1e}"))
    };
    assert!(report(3, "GAE oracle equivalence", run()));
}

#[test]
fn c04_physics_invariants() {
    let _g = SERIAL.lock().unwrap();
    let run = || -> Result<String, String> {
        let model = CharacterModel::biped();
        let mut rng = ChaCha8Rng::seed_from_u64(1);

        let sim = Simulator::new(model.clone(), SimConfig::default()).unwrap();
        let targets: Vec<Vec<f64>> =
            (0..60).map(|_| (0..model.num_joints()).map(|_| rng.random_range(-0.5..0.5)).collect()).collect();
        let roll = || {
            let mut s = SimState::standing(&model);
            s.root_vel = [0.5, 0.0];
            for t in &targets {
                s = sim.step(&s, Some(t), &[]).unwrap();
            }
            s.generalized_positions().iter().chain(&s.generalized_velocities()).map(|v| v.to_bits()).collect::<Vec<_>>()
        };
        check(roll() == roll(), || "two identical runs differ".into())?;

        let free = Simulator::new(model.clone(), SimConfig { contacts: false, ..SimConfig::default() }).unwrap();
        let mut drift: f64 = 0.0;
        let mut rise: f64 = 0.0;
        for _ in 0..5 {
            let mut s = random_state(&model, &mut rng);
            s.root_vel = [rng.random_range(0.5..1.5), rng.random_range(-1.0..1.0)];
            s.root_angvel = rng.random_range(-1.0..1.0);
            for v in s.qd.iter_mut() {
                *v = rng.random_range(-2.0..2.0);
            }
            let p0 = linear_momentum(&model, &s)[0];
            let mut e = mechanical_energy(&model, &s, free.config().gravity);
            for _ in 0..60 {
                s = free.step(&s, None, &[]).unwrap();
                let e1 = mechanical_energy(&model, &s, free.config().gravity);
                rise = rise.max((e1 - e) / e.abs().max(1.0));
                e = e1;
            }
            drift = drift.max(((linear_momentum(&model, &s)[0] - p0) / p0).abs());
        }
        check(drift < 1e-9, || format!("ballistic momentum drift {drift:e}"))?;
        check(rise <= 1e-6, || format!("passive energy rose by {rise:e} in one frame"))?;

        let mut fk: f64 = 0.0;
        for _ in 0..200 {
            let s = random_state(&model, &mut rng);
            let poses = forward_kinematics(&model, &s).map_err(|e| e.to_string())?;
            for (p, o) in poses.iter().zip(chain_oracle(&model, &s)) {
                fk = fk.max((p.pos[0] - o[0]).abs()).max((p.pos[1] - o[1]).abs());
            }
        }
        check(fk < 1e-10, || format!("FK deviates from the chain oracle by {fk:e}"))?;
        Ok(format!("bit-exact replay, momentum drift {drift:.1e}, energy rise {rise:.1e}, FK {fk:.1e}"))
    };
    assert!(report(4, "physics invariants", run()));
}

fn separation_data(agent_noise: f64, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, usize) {
    let model = CharacterModel::biped();
    let clips = common::clips("walk");
    let sampler = ReferenceSampler::new(&clips, FeatureKind::Link).unwrap();
    let reference = (0..50).map(|_| sampler.sample(&clips, &model, None, rng).unwrap().0.data).collect();
    let agent = (0..50)
        .map(|_| {
            let noise = PoseNoise::sample(model.num_joints(), agent_noise, rng);
            sampler.sample(&clips, &model, Some(&noise), rng).unwrap().0.data
        })
        .collect();
    (agent, reference, FeatureKind::Link.frame_width(&model))
}

fn slices(w: &[Vec<f64>]) -> Vec<&[f64]> {
    w.iter().map(|v| v.as_slice()).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn c05_discriminator_separation() {
    let _g = SERIAL.lock().unwrap();
    let run = || -> Result<String, String> {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = GanConfig { gradient_penalty_coefficient: 0.0, ..GanConfig::default() };
        let (agent, reference, width) = separation_data(0.6, &mut rng);
        let (a, r) = (slices(&agent), slices(&reference));
        let mut ens = DiscriminatorEnsemble::new(&cfg, width, &mut rng).unwrap();
        ens.normalizer_mut().update(a.iter().chain(&r).copied());
        let mut separated = None;
        let (mut ra, mut rr) = (0.0, 0.0);
        for step in 1..=2000 {
            ens.update(&a, &r, &cfg, &mut rng).map_err(|e| e.to_string())?;
            if step % 25 == 0 || step == 2000 {
                ra = mean(&ens.rewards_batch(&a).unwrap());
                rr = mean(&ens.rewards_batch(&r).unwrap());
                if rr > 0.9 && ra < -0.9 {
                    separated = Some(step);
                    break;
                }
            }
        }
        let steps = separated.ok_or_else(|| format!("after 2000 updates reference {rr:.3}, agent {ra:.3}"))?;

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = GanConfig {
            ensemble_size: 8,
            gru_units: 64,
            hidden_units: vec![64, 32],
            discriminator_learning_rate: 1e-3,
            ..GanConfig::default()
        };
        let (agent, reference, width) = separation_data(0.03, &mut rng);
        let (a, r) = (slices(&agent), slices(&reference));
        let mut ens = DiscriminatorEnsemble::new(&cfg, width, &mut rng).unwrap();
        ens.normalizer_mut().update(a.iter().chain(&r).copied());
        for _ in 0..600 {
            ens.update(&a, &r, &cfg, &mut rng).map_err(|e| e.to_string())?;
        }
        let alphas: Vec<f64> = (0..50).map(|k| (k as f64 + 0.5) / 50.0).collect();
        let mixed = interpolate_windows(&a, &r, &alphas);
        let norm = ens.input_gradient_norms(&slices(&mixed)).map_err(|e| e.to_string())?.mean().unwrap();
        check((0.8..=1.2).contains(&norm), || format!("separated in {steps} updates, but penalized norm mean {norm:.3}"))?;
        Ok(format!("rewards {rr:.3}/{ra:.3} after {steps} updates; penalized gradient norm mean {norm:.3}"))
    };
    assert!(report(5, "discriminator separation", run()));
}

// ---- end-to-end runs ----

struct Run {
    bundle: PolicyBundle,
    samples: u64,
    clips: Vec<MotionClip>,
}

fn load_run(dir: &str, behavior: &str) -> Result<Run, String> {
    let path = repo_root().join("runs").join(dir).join("latest.json");
    if !path.exists() {
        return Err(format!("no run at {} (run ./runs.sh)", path.display()));
    }
    let ck = Checkpoint::load(&path).map_err(|e| e.to_string())?;
    let samples = ck.meta.samples;
    let bundle = ck.into_bundle().map_err(|e| e.to_string())?;
    let cfg = RunConfig::load(repo_root().join(format!("data/configs/desk-{behavior}.toml"))).map_err(|e| e.to_string())?;
    let clips = cfg.load_clips(&bundle.model).map_err(|e| e.to_string())?;
    Ok(Run { bundle, samples, clips })
}

fn eval(frames: usize, seed: u64) -> EvalConfig {
    EvalConfig { trials: 20, seed, threads: 1, init_noise: 0.0, frames: Some(frames) }
}

#[test]
fn c06_stand_training() {
    let _g = SERIAL.lock().unwrap();
    let mut good = 0;
    let mut notes = Vec::new();
    for seed in 0..5u64 {
        match load_run(&format!("stand-s{seed}"), "stand") {
            Ok(run) => {
                let rep = imitation_error(&run.bundle, &run.clips, &eval(300, seed)).unwrap();
                let frac = rep.sustained_fraction(0.1, 300);
                let ok = frac >= 0.8 && run.samples <= 2_000_000;
                good += usize::from(ok);
                notes.push(format!("s{seed} {:.0}% at {} samples", 100.0 * frac, run.samples));
            }
            Err(e) => notes.push(format!("s{seed}: {e}")),
        }
    }
    let detail = format!("{good}/5 seeds sustain < 0.1 m over 300 frames in >= 80% of trials ({})", notes.join(", "));
    report(6, "stand training", if good >= 4 { Ok(detail) } else { Err(detail) });
}

#[test]
fn c07_walk_training() {
    let _g = SERIAL.lock().unwrap();
    let run = || -> Result<String, String> {
        let run = load_run("walk", "walk")?;
        let rep = imitation_error(&run.bundle, &run.clips, &eval(500, 0)).map_err(|e| e.to_string())?;
        let frac = rep.trials.iter().filter(|t| !t.fell && t.errors.len() >= 500).count() as f64 / 20.0;
        let metrics = std::fs::read_to_string(repo_root().join("runs/walk/metrics.jsonl")).map_err(|e| e.to_string())?;
        let rewards: Vec<f64> = metrics
            .lines()
            .filter_map(|l| serde_json::from_str::<serde_json::Value>(l).ok())
            .filter_map(|v| v["mean_reward"].as_f64())
            .collect();
        let recent = &rewards[rewards.len().saturating_sub(10)..];
        let reward = if recent.is_empty() { f64::NAN } else { mean(recent) };
        let detail = format!(
            "{:.0}% of trials survive 500 frames, mean reward {reward:.3}, {} samples",
            100.0 * frac,
            run.samples
        );
        check(frac >= 0.6 && reward > 0.5 && run.samples <= 5_000_000, || detail.clone())?;
        Ok(detail)
    };
    report(7, "walk training", run());
}

#[test]
fn c08_transition_statistics() {
    let _g = SERIAL.lock().unwrap();
    let run = || -> Result<String, String> {
        let stand = load_run("stand-s0", "stand")?;
        let walk = load_run("walk", "walk")?;
        let cfg = EvalConfig { trials: 2000, seed: 0, threads: 1, init_noise: 0.0, frames: None };
        let mut notes = Vec::new();
        let mut ok = true;
        for (src, dst) in [(&stand, &walk), (&walk, &stand)] {
            let rep = transition_test(&src.bundle, &src.clips, &dst.bundle, &dst.clips, &cfg).map_err(|e| e.to_string())?;
            let monotone = rep.curve.windows(2).all(|p| p[1].coverage <= p[0].coverage);
            let success = rep.trials.iter().filter(|t| t.success).count() as f64 / rep.trials.len() as f64;
            match rep.extreme_bins(20) {
                Some((lo, hi)) => {
                    let gap = hi.rate() - lo.rate();
                    ok &= monotone && gap >= 0.2;
                    notes.push(format!("{} -> {}: top-bottom bin gap {:+.0} pts", rep.source, rep.target, 100.0 * gap));
                }
                None => {
                    ok = false;
                    let used: Vec<String> = rep
                        .bins
                        .iter()
                        .filter(|b| b.count > 0)
                        .map(|b| format!("[{:.1}, {:.1}): {}", b.lo, b.hi, b.count))
                        .collect();
                    notes.push(format!(
                        "{} -> {}: fewer than two bins hold 20 trials ({}), overall success {:.0}%",
                        rep.source,
                        rep.target,
                        used.join(", "),
                        100.0 * success
                    ));
                }
            }
        }
        let detail = notes.join("; ");
        check(ok, || detail.clone())?;
        Ok(detail + "; coverage monotone in threshold")
    };
    report(8, "transition statistics", run());
}

// ---- structure ----

#[derive(Default)]
struct Audit {
    order: Vec<&'static str>,
    reward_error: f64,
    rewards: usize,
}

impl TrainHooks for Audit {
    fn on_event(&mut self, e: &TrainEvent<'_>) -> Result<(), RlError> {
        self.order.push(match e {
            TrainEvent::Rollout { rollout, ensemble, .. } => {
                for t in rollout.iter() {
                    let scores = ensemble.scores(&t.observation).unwrap();
                    self.reward_error = self.reward_error.max((clipped_mean(&scores) - t.reward).abs());
                    self.rewards += 1;
                }
                "rollout"
            }
            TrainEvent::DiscriminatorUpdated { .. } => "discriminator",
            TrainEvent::DiscriminatorBufferCleared { .. } => "discriminator-clear",
            TrainEvent::PolicyUpdated { .. } => "policy",
            TrainEvent::PolicyBufferCleared { .. } => "policy-clear",
            TrainEvent::Iteration { .. } => "iteration",
        });
        Ok(())
    }
}

#[test]
fn c09_training_loop_conformance() {
    let _g = SERIAL.lock().unwrap();
    let run = || -> Result<String, String> {
        let mut t = Trainer::new("stand", tiny_config(), CharacterModel::biped(), SimConfig::default(), common::clips("stand"))
            .map_err(|e| e.to_string())?;
        let mut audit = Audit::default();
        for i in 0..3 {
            t.iterate(&mut audit).map_err(|e| e.to_string())?;
            check(t.pair_buffer().is_empty() && t.policy_buffer().is_empty(), || format!("buffers not empty after iteration {i}"))?;
        }
        let one = ["rollout", "discriminator", "discriminator-clear", "policy", "policy-clear", "iteration"];
        check(audit.order == [one, one, one].concat(), || format!("event order {:?}", audit.order))?;
        check(audit.reward_error == 0.0, || format!("reward differs from the clipped ensemble mean by {:e}", audit.reward_error))?;
        Ok(format!("3 iterations in order, buffers cleared, {} rewards equal the clipped ensemble mean", audit.rewards))
    };
    assert!(report(9, "training loop conformance", run()));
}

#[test]
fn c10_checkpoint_and_wire_robustness() {
    let _g = SERIAL.lock().unwrap();
    let run = || -> Result<String, String> {
        let (bundle, _) = tiny_bundle("walk", 5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("walk.json");
        let meta = CheckpointMeta { iteration: 1, samples: 2, config_source: None };
        save_bundle(&bundle, &path, meta.clone()).map_err(|e| e.to_string())?;
        let back = load_bundle(&path).map_err(|e| e.to_string())?;
        let same = Checkpoint::from_bundle(&bundle, meta.clone()).to_json() == Checkpoint::from_bundle(&back, meta).to_json();
        let bits = |b: &PolicyBundle| -> Vec<u64> {
            let nets = [&b.actor.policy, &b.actor.value, b.ensemble.net()];
            nets.iter().flat_map(|n| n.params().iter().flat_map(|p| p.value.iter().map(|v| v.to_bits()))).collect()
        };
        check(same && bits(&bundle) == bits(&back), || "checkpoint round trip changed the bundle".into())?;

        let mut reg = Registry::new();
        for t in ["stand", "walk"] {
            let (b, c) = tiny_bundle(t, 0);
            reg.insert(b, c).map_err(|e| e.to_string())?;
        }
        let session = Session::new(Runtime::from_clip(reg, SwitchConfig::default(), "stand", 0.0).map_err(|e| e.to_string())?);
        let opts = ServerOptions { addr: "127.0.0.1:0".into(), hz: 120.0, queue: 256, max_frames: None };
        let mut handle = serve(session, opts).map_err(|e| e.to_string())?;
        let mut ws = connect(handle.addr());
        let set_timeout = |ws: &mut Client, d: Duration| {
            if let tungstenite::stream::MaybeTlsStream::Plain(s) = ws.get_ref() {
                s.set_read_timeout(Some(d)).unwrap();
            }
        };
        set_timeout(&mut ws, Duration::from_millis(2));
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut received = 0usize;
        let start = Instant::now();
        for i in 0..10_000 {
            ws.send(Message::text(fuzz_message(&mut rng))).map_err(|e| format!("send {i}: {e}"))?;
            if i % 50 == 49 {
                // keep both directions moving
                while let Ok(m) = ws.read() {
                    received += usize::from(m.is_text());
                }
                check(handle.is_running(), || format!("server stopped after {i} messages"))?;
            }
        }
        set_timeout(&mut ws, Duration::from_secs(5));
        ws.send(Message::text(r#"{"type":"pause"}"#)).map_err(|e| e.to_string())?;
        recv_until(&mut ws, |m| matches!(m, ServerMessage::Event { kind: EventKind::Paused, .. }));
        check(handle.is_running(), || "server stopped".into())?;
        handle.stop();
        Ok(format!(
            "bit-exact checkpoint; 10000 fuzzed messages in {:.1} s, {received} replies, server up",
            start.elapsed().as_secs_f64()
        ))
    };
    assert!(report(10, "checkpoint and wire robustness", run()));
}

#[test]
fn c11_ablation_switches() {
    let _g = SERIAL.lock().unwrap();
    let run = || -> Result<String, String> {
        let dir = tempfile::tempdir().unwrap();
        let mut cases = Vec::new();
        for n in [1usize, 8, 32, 64] {
            cases.push((n, "link"));
        }
        for obs in ["link+vel", "joint", "joint+vel"] {
            cases.push((8, obs));
        }
        for (n, obs) in &cases {
            let name = format!("ablate-{n}-{}", obs.replace('+', "-"));
            let text = tiny_toml(&name, "walk")
                .replace("ensemble_size = 2", &format!("ensemble_size = {n}\nobservation = \"{obs}\""));
            let cfg_path = dir.path().join(format!("{name}.toml"));
            std::fs::write(&cfg_path, text).unwrap();
            let out = dir.path().join(&name);
            let status = std::process::Command::new(env!("CARGO_BIN_EXE_advmimic"))
                .args(["train", "--config"])
                .arg(&cfg_path)
                .arg("--out")
                .arg(&out)
                .env("RUST_LOG", "warn")
                .status()
                .map_err(|e| e.to_string())?;
            check(status.success(), || format!("{name}: train exited with {status}"))?;
            let log = std::fs::read_to_string(out.join("metrics.jsonl")).map_err(|e| format!("{name}: {e}"))?;
            check(log.lines().count() >= 1, || format!("{name}: empty metrics log"))?;
            let b = load_bundle(out.join(format!("{name}.json"))).map_err(|e| e.to_string())?;
            let want: FeatureKind = serde_json::from_value(serde_json::json!(obs)).unwrap();
            check(b.ensemble.num_heads() == *n && b.observation == want, || {
                format!("{name}: got {} heads, {:?}", b.ensemble.num_heads(), b.observation)
            })?;
        }
        Ok(format!("{} configs trained from TOML with metrics logs (N = 1/8/32/64; 4 observation kinds)", cases.len()))
    };
    assert!(report(11, "ablation switches", run()));
}
