//! Parameter counts and inference latency at the reference network sizes.

use advmimic::motion::{generate_procedural_clips, ClipSpec};
use advmimic::physics::{CharacterModel, SimConfig};
use advmimic::rl::{TrainConfig, Trainer};
use advmimic::service::bench;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = CharacterModel::biped();
    let clips = generate_procedural_clips(&ClipSpec::new("walk"), &model)?;
    for n in [1, 8, 32] {
        let mut cfg = TrainConfig::default();
        cfg.discriminator.ensemble_size = n;
        let bundle = Trainer::new("walk", cfg, model.clone(), SimConfig::default(), clips.clone())?.into_bundle();
        let r = bench(&bundle, 200, 0)?;
        println!(
            "N = {n:>2}: policy {} params {:.3} ms, ensemble {} params {:.3} ms",
            r.policy_params, r.policy_latency.mean_ms, r.ensemble_params, r.ensemble_latency.mean_ms
        );
    }
    Ok(())
}
