//! Two policies under one runtime: request a switch and watch the gate.
//!
//! Runs on untrained policies by default, so expect rejections. Pass two
//! checkpoints to use trained ones.
//!
//! ```text
//! cargo run --release --example switching -- runs/stand-s0/latest.json runs/walk/latest.json
//! ```

use advmimic::control::{Registry, Runtime, RuntimeEvent, SwitchConfig};
use advmimic::motion::{generate_procedural_clips, ClipSpec};
use advmimic::physics::{CharacterModel, SimConfig};
use advmimic::rl::{TrainConfig, Trainer};
use advmimic::service::load_bundle;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let model = CharacterModel::biped();
    let mut registry = Registry::new();
    for (i, name) in ["stand", "walk"].into_iter().enumerate() {
        let clips = generate_procedural_clips(&ClipSpec::new(name), &model)?;
        let bundle = match args.get(i) {
            Some(path) => load_bundle(path)?,
            None => Trainer::new(name, TrainConfig::default(), model.clone(), SimConfig::default(), clips.clone())?
                .into_bundle(),
        };
        registry.insert(bundle, clips)?;
    }

    let config = SwitchConfig { threshold: 0.1, response_window: 90, ..SwitchConfig::default() };
    let names = registry.names();
    let (from, to) = (names[0].clone(), names[1].clone());
    let mut rt = Runtime::from_clip(registry, config, &from, 0.0)?;
    for frame in 0..240 {
        if frame == 60 {
            rt.request(&to)?;
        }
        let t = rt.step(&[])?;
        for e in &t.events {
            match e {
                RuntimeEvent::Switched { from, to, score } => println!("{frame:>4} switched {from} -> {to} at {score:.3}"),
                other => println!("{frame:>4} {other:?}"),
            }
        }
        if let Some(s) = t.scores.get(&to).filter(|_| frame % 15 == 0) {
            println!("{frame:>4} {to} gate score {s:.3}");
        }
    }
    println!("active at the end: {}", rt.active());
    Ok(())
}
