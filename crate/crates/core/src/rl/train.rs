use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gae::{gae, normalize_advantages};
use super::ppo::{ppo_update, PpoBatch, PpoOptimizers, PpoStats};
use super::rollout::{collect_rollout, EnvContext, Rollout, Worker};
use super::{ActorCritic, ClipMeta, PolicyBundle, RlError, TrainConfig};
use crate::adversarial::{DiscriminatorEnsemble, PairBuffer, UpdateReport};
use crate::motion::{FeatureKind, MotionClip, ReferenceSampler};
use crate::nn::RunningNormalizer;
use crate::physics::{CharacterModel, SimConfig, Simulator};

/// One line of the metrics log.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub samples: u64,
    pub mean_reward: f64,
    pub episodes: usize,
    pub mean_episode_length: f64,
    pub early_terminations: usize,
    pub discriminator_loss: f64,
    pub discriminator_steps: usize,
    pub gradient_norm_mean: f64,
    pub agent_score: f64,
    pub reference_score: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub first_ratio_deviation: f64,
    pub log_std_mean: f64,
    /// Wall time; left out of the log so runs with the same seed compare equal.
    #[serde(skip_serializing, default)]
    pub seconds: f64,
}

/// Observation points inside one training iteration, in the order they occur.
#[derive(Debug)]
pub enum TrainEvent<'a> {
    /// Rollout finished; `ensemble` is the snapshot that produced its rewards.
    Rollout { iteration: usize, rollout: &'a Rollout, ensemble: &'a DiscriminatorEnsemble },
    DiscriminatorUpdated { iteration: usize, steps: usize, buffer_len: usize },
    DiscriminatorBufferCleared { iteration: usize, len: usize },
    PolicyUpdated { iteration: usize, stats: &'a PpoStats, batch_len: usize },
    PolicyBufferCleared { iteration: usize, len: usize },
    Iteration { metrics: &'a IterationMetrics, bundle: &'a PolicyBundle },
}

pub trait TrainHooks {
    fn on_event(&mut self, _event: &TrainEvent<'_>) -> Result<(), RlError> {
        Ok(())
    }
}

impl TrainHooks for () {}

impl<A: TrainHooks, B: TrainHooks> TrainHooks for (A, B) {
    fn on_event(&mut self, event: &TrainEvent<'_>) -> Result<(), RlError> {
        self.0.on_event(event)?;
        self.1.on_event(event)
    }
}

impl<H: TrainHooks + ?Sized> TrainHooks for &mut H {
    fn on_event(&mut self, event: &TrainEvent<'_>) -> Result<(), RlError> {
        (**self).on_event(event)
    }
}

/// Writes one JSON object per iteration.
pub struct JsonlMetrics<W: Write> {
    out: W,
}

impl<W: Write> JsonlMetrics<W> {
    pub fn new(out: W) -> Self {
        JsonlMetrics { out }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> TrainHooks for JsonlMetrics<W> {
    fn on_event(&mut self, event: &TrainEvent<'_>) -> Result<(), RlError> {
        if let TrainEvent::Iteration { metrics, .. } = event {
            let line = serde_json::to_string(metrics).expect("metrics serialize");
            writeln!(self.out, "{line}")
                .and_then(|_| self.out.flush())
                .map_err(|e| RlError::Config { field: "metrics".into(), reason: e.to_string() })?;
        }
        Ok(())
    }
}

/// Advantages and value targets per worker, segment by segment, flattened
/// in worker order.
pub fn build_batch(rollout: &Rollout, gamma: f64, lambda: f64) -> PpoBatch {
    let mut batch = PpoBatch::default();
    for ts in &rollout.transitions {
        let mut begin = 0;
        for (k, t) in ts.iter().enumerate() {
            let Some(end) = t.end else { continue };
            let seg = &ts[begin..=k];
            let rewards: Vec<f64> = seg.iter().map(|t| t.reward).collect();
            let mut values: Vec<f64> = seg.iter().map(|t| t.value).collect();
            values.push(t.bootstrap);
            let mut dones = vec![false; seg.len()];
            dones[seg.len() - 1] = end.is_terminal();
            let (adv, ret) = gae(&rewards, &values, &dones, gamma, lambda);
            for (t, (a, r)) in seg.iter().zip(adv.into_iter().zip(ret)) {
                batch.states.push(t.state.clone());
                batch.actions.push(t.action.clone());
                batch.log_probs.push(t.log_prob);
                batch.advantages.push(a);
                batch.returns.push(r);
            }
            begin = k + 1;
        }
    }
    normalize_advantages(&mut batch.advantages);
    batch
}

/// Adversarial imitation training state.
pub struct Trainer {
    cfg: TrainConfig,
    sim: Simulator,
    clips: Vec<MotionClip>,
    sampler: ReferenceSampler,
    bundle: PolicyBundle,
    optimizers: PpoOptimizers,
    workers: Vec<Worker>,
    rng: ChaCha8Rng,
    pairs: PairBuffer,
    transitions: Rollout,
    iteration: usize,
    samples: u64,
    started: Instant,
}

impl Trainer {
    pub fn new(
        name: &str,
        cfg: TrainConfig,
        model: CharacterModel,
        sim_cfg: SimConfig,
        clips: Vec<MotionClip>,
    ) -> Result<Self, RlError> {
        cfg.validate()?;
        for c in &clips {
            c.check_model(&model)?;
        }
        let obs = cfg.discriminator.observation;
        let sampler = ReferenceSampler::new(&clips, obs)?;
        let sim = Simulator::new(model.clone(), sim_cfg.clone())?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let actor = ActorCritic::new(&cfg.ppo, FeatureKind::LinkVel.frame_width(&model), model.num_joints(), &mut rng)?;
        let ensemble = DiscriminatorEnsemble::new(&cfg.discriminator, obs.frame_width(&model), &mut rng)?;
        let bundle = PolicyBundle {
            name: name.to_string(),
            model,
            sim: sim_cfg,
            actor,
            ensemble,
            observation: obs,
            clips: clips.iter().map(ClipMeta::of).collect(),
            config: cfg.clone(),
        };
        let workers = {
            let ctx = EnvContext::new(&sim, &clips, &sampler, obs, cfg.init_noise, cfg.overtime_limit);
            (0..cfg.workers).map(|i| Worker::new(i, cfg.seed, &ctx)).collect::<Result<Vec<_>, _>>()?
        };
        Ok(Trainer {
            optimizers: PpoOptimizers::new(&cfg.ppo),
            pairs: PairBuffer::new(cfg.discriminator.discriminator_replay_buffer_size),
            transitions: Rollout::default(),
            cfg,
            sim,
            clips,
            sampler,
            bundle,
            workers,
            rng,
            iteration: 0,
            samples: 0,
            started: Instant::now(),
        })
    }

    pub fn bundle(&self) -> &PolicyBundle {
        &self.bundle
    }

    pub fn into_bundle(self) -> PolicyBundle {
        self.bundle
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn pair_buffer(&self) -> &PairBuffer {
        &self.pairs
    }

    pub fn policy_buffer(&self) -> &Rollout {
        &self.transitions
    }

    pub fn done(&self) -> bool {
        self.samples >= self.cfg.sample_budget
    }

    /// One pass of: rollout, discriminator updates, policy updates.
    pub fn iterate(&mut self, hooks: &mut dyn TrainHooks) -> Result<IterationMetrics, RlError> {
        let it = self.iteration;
        let diverged = |e: RlError| RlError::Diverged { iteration: it, reason: e.to_string() };
        let threads = self.cfg.physics_threads();
        let obs = self.cfg.discriminator.observation;
        let ctx = EnvContext::new(&self.sim, &self.clips, &self.sampler, obs, self.cfg.init_noise, self.cfg.overtime_limit);

        self.transitions = collect_rollout(
            &ctx,
            &mut self.workers,
            &self.bundle.actor,
            &self.bundle.ensemble,
            self.cfg.steps_per_worker(),
            false,
            threads,
        )?;
        hooks.on_event(&TrainEvent::Rollout {
            iteration: it,
            rollout: &self.transitions,
            ensemble: &self.bundle.ensemble,
        })?;
        for t in self.transitions.iter() {
            self.pairs.push(t.observation.clone(), t.reference.clone(), &mut self.rng);
        }

        let reports = self
            .bundle
            .ensemble
            .train_on_buffer(&self.pairs, &self.cfg.discriminator, &mut self.rng)
            .map_err(|e| diverged(e.into()))?;
        hooks.on_event(&TrainEvent::DiscriminatorUpdated {
            iteration: it,
            steps: reports.len(),
            buffer_len: self.pairs.len(),
        })?;
        self.pairs.clear();
        hooks.on_event(&TrainEvent::DiscriminatorBufferCleared { iteration: it, len: self.pairs.len() })?;

        let p = &self.cfg.ppo;
        let batch = build_batch(&self.transitions, p.reward_discount_factor, p.gae_discount_factor);
        let stats = ppo_update(&mut self.bundle.actor, &mut self.optimizers, &batch, p, &mut self.rng)
            .map_err(diverged)?;
        hooks.on_event(&TrainEvent::PolicyUpdated { iteration: it, stats: &stats, batch_len: batch.len() })?;

        // state statistics move only between iterations, so log-probabilities
        // recorded during the rollout stay exact for the update above
        let mut merged = RunningNormalizer::new(self.bundle.actor.normalizer.dim());
        for ts in &self.transitions.transitions {
            merged.merge(&RunningNormalizer::from_rows(merged.dim(), ts.iter().map(|t| t.state.as_slice())));
        }
        self.bundle.actor.normalizer.merge(&merged);

        let metrics = self.metrics(&reports, &stats);
        self.transitions = Rollout::default();
        hooks.on_event(&TrainEvent::PolicyBufferCleared { iteration: it, len: self.transitions.len() })?;
        self.iteration += 1;
        hooks.on_event(&TrainEvent::Iteration { metrics: &metrics, bundle: &self.bundle })?;
        Ok(metrics)
    }

    fn metrics(&mut self, reports: &[UpdateReport], stats: &PpoStats) -> IterationMetrics {
        let n = self.transitions.len();
        self.samples += n as u64;
        let eps = &self.transitions.episodes;
        let mean = |f: &dyn Fn(&UpdateReport) -> f64| {
            if reports.is_empty() {
                0.0
            } else {
                reports.iter().map(f).sum::<f64>() / reports.len() as f64
            }
        };
        IterationMetrics {
            iteration: self.iteration,
            samples: self.samples,
            mean_reward: self.transitions.iter().map(|t| t.reward).sum::<f64>() / n.max(1) as f64,
            episodes: eps.len(),
            mean_episode_length: eps.iter().map(|e| e.length as f64).sum::<f64>() / eps.len().max(1) as f64,
            early_terminations: eps.iter().filter(|e| e.end.is_terminal()).count(),
            discriminator_loss: mean(&|r| r.loss),
            discriminator_steps: reports.len(),
            gradient_norm_mean: mean(&|r| r.grad_norm_mean),
            agent_score: mean(&|r| r.agent_reward),
            reference_score: mean(&|r| r.reference_reward),
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            clip_fraction: stats.clip_fraction,
            approx_kl: stats.approx_kl,
            first_ratio_deviation: stats.first_ratio_deviation,
            log_std_mean: self.bundle.actor.log_std.mean().unwrap_or(0.0),
            seconds: self.started.elapsed().as_secs_f64(),
        }
    }

    /// Iterates until the sample budget is spent.
    pub fn run(&mut self, hooks: &mut dyn TrainHooks) -> Result<(), RlError> {
        while !self.done() {
            self.iterate(hooks)?;
        }
        Ok(())
    }
}

/// Trains a fresh bundle on `clips` until the sample budget is spent.
pub fn train(
    name: &str,
    cfg: TrainConfig,
    model: CharacterModel,
    sim: SimConfig,
    clips: Vec<MotionClip>,
    hooks: &mut dyn TrainHooks,
) -> Result<PolicyBundle, RlError> {
    let mut trainer = Trainer::new(name, cfg, model, sim, clips)?;
    trainer.run(hooks)?;
    Ok(trainer.into_bundle())
}
