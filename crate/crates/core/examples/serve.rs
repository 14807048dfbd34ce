//! Streams a simulated character over a websocket.
//!
//! ```text
//! cargo run --release --example serve -- runs/stand-s0/latest.json runs/walk/latest.json
//! ```
//!
//! Connect with any websocket client to `ws://127.0.0.1:8765` and send e.g.
//! `{"type":"request_switch","target":"walk"}`.

use advmimic::control::{Registry, Runtime, SwitchConfig};
use advmimic::motion::{generate_procedural_clips, ClipSpec};
use advmimic::physics::CharacterModel;
use advmimic::service::{load_bundle, serve, ServerOptions, Session};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let paths: Vec<String> = std::env::args().skip(1).collect();
    if paths.is_empty() {
        return Err("usage: serve <checkpoint>...".into());
    }
    let model = CharacterModel::biped();
    let mut registry = Registry::new();
    for p in &paths {
        let bundle = load_bundle(p)?;
        // trained on the procedural clip of the same name
        let clips = generate_procedural_clips(&ClipSpec::new(&bundle.name.replace("desk-", "")), &model)?;
        registry.insert(bundle, clips)?;
    }
    let first = registry.names()[0].clone();
    let session = Session::new(Runtime::from_clip(registry, SwitchConfig::default(), &first, 0.0)?);
    let handle = serve(session, ServerOptions::default())?;
    println!("listening on ws://{}", handle.addr());
    handle.wait();
    Ok(())
}
