#![allow(dead_code)]

pub mod client;
pub mod oracles;

use advmimic::motion::{generate_procedural_clips, ClipSpec, MotionClip};
use advmimic::physics::{CharacterModel, SimConfig};
use advmimic::rl::{PolicyBundle, TrainConfig, Trainer};

/// A run config small enough to train for a few iterations in seconds.
pub const TINY_TOML: &str = r#"
name = "NAME"

[[clips]]
template = "TEMPLATE"

[training]
seed = 0
workers = 1
sample_budget = 128
checkpoint_every = 1

[ppo]
ppo_replay_buffer_size = 64
ppo_batch_size = 32
ppo_optimization_epochs = 1
policy_gru_units = 8
policy_hidden_units = [16]

[discriminator]
discriminator_batch_size = 16
discriminator_replay_buffer_size = 64
ensemble_size = 2
gru_units = 8
hidden_units = [8]
"#;

pub fn tiny_toml(name: &str, template: &str) -> String {
    TINY_TOML.replace("NAME", name).replace("TEMPLATE", template)
}

pub fn tiny_config() -> TrainConfig {
    let mut c = TrainConfig::default();
    c.workers = 1;
    c.sample_budget = 128;
    c.ppo.ppo_replay_buffer_size = 64;
    c.ppo.ppo_batch_size = 32;
    c.ppo.ppo_optimization_epochs = 1;
    c.ppo.policy_gru_units = 8;
    c.ppo.policy_hidden_units = vec![16];
    c.discriminator.discriminator_batch_size = 16;
    c.discriminator.discriminator_replay_buffer_size = 64;
    c.discriminator.ensemble_size = 2;
    c.discriminator.gru_units = 8;
    c.discriminator.hidden_units = vec![8];
    c
}

pub fn clips(template: &str) -> Vec<MotionClip> {
    generate_procedural_clips(&ClipSpec::new(template), &CharacterModel::biped()).unwrap()
}

/// An untrained bundle named after its template.
pub fn tiny_bundle(template: &str, seed: u64) -> (PolicyBundle, Vec<MotionClip>) {
    let clips = clips(template);
    let mut cfg = tiny_config();
    cfg.seed = seed;
    let t = Trainer::new(template, cfg, CharacterModel::biped(), SimConfig::default(), clips.clone()).unwrap();
    (t.into_bundle(), clips)
}
