//! A discriminator ensemble learning to tell clean reference windows from
//! noisy ones, with and without the gradient penalty.

use advmimic::adversarial::{interpolate_windows, DiscriminatorEnsemble, GanConfig};
use advmimic::motion::{generate_procedural_clips, ClipSpec, FeatureKind, PoseNoise, ReferenceSampler};
use advmimic::physics::CharacterModel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = CharacterModel::biped();
    let clips = generate_procedural_clips(&ClipSpec::new("walk"), &model)?;
    let sampler = ReferenceSampler::new(&clips, FeatureKind::Link)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut reference = Vec::new();
    let mut agent = Vec::new();
    for _ in 0..50 {
        reference.push(sampler.sample(&clips, &model, None, &mut rng)?.0.data);
        let noise = PoseNoise::sample(model.num_joints(), 0.2, &mut rng);
        agent.push(sampler.sample(&clips, &model, Some(&noise), &mut rng)?.0.data);
    }
    let r: Vec<&[f64]> = reference.iter().map(Vec::as_slice).collect();
    let a: Vec<&[f64]> = agent.iter().map(Vec::as_slice).collect();
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;

    for gp in [0.0, 10.0] {
        let cfg = GanConfig {
            ensemble_size: 8,
            gru_units: 32,
            hidden_units: vec![64, 32],
            discriminator_learning_rate: 1e-3,
            gradient_penalty_coefficient: gp,
            ..GanConfig::default()
        };
        let mut ens = DiscriminatorEnsemble::new(&cfg, FeatureKind::Link.frame_width(&model), &mut rng)?;
        ens.normalizer_mut().update(a.iter().chain(&r).copied());
        for step in 0..=300 {
            let rep = ens.update(&a, &r, &cfg, &mut rng)?;
            if step % 100 == 0 {
                println!(
                    "gp {gp:>4}: step {step:>3} loss {:.3} reward ref {:+.3} agent {:+.3}",
                    rep.loss,
                    mean(ens.rewards_batch(&r)?),
                    mean(ens.rewards_batch(&a)?)
                );
            }
        }
        let alphas: Vec<f64> = (0..50).map(|k| (k as f64 + 0.5) / 50.0).collect();
        let mixed = interpolate_windows(&a, &r, &alphas);
        let mixed: Vec<&[f64]> = mixed.iter().map(Vec::as_slice).collect();
        println!("gp {gp:>4}: input gradient norm between the sets {:.3}", ens.input_gradient_norms(&mixed)?.mean().unwrap());
    }
    Ok(())
}
