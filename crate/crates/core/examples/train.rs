//! Trains a policy from a run config and saves a checkpoint.
//!
//! ```text
//! cargo run --release --example train -- data/configs/desk-stand.toml 200000 stand.json
//! ```

use std::io::stdout;
use std::path::PathBuf;

use advmimic::rl::{JsonlMetrics, Trainer};
use advmimic::service::{save_bundle, CheckpointMeta, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let config = args.get(1).map(PathBuf::from).unwrap_or_else(|| "data/configs/desk-stand.toml".into());
    let mut cfg = RunConfig::load(&config)?;
    if let Some(budget) = args.get(2) {
        cfg.training.sample_budget = budget.parse()?;
    }
    let out = args.get(3).map(PathBuf::from).unwrap_or_else(|| format!("{}.json", cfg.name).into());

    let model = cfg.load_model()?;
    let clips = cfg.load_clips(&model)?;
    let mut trainer = Trainer::new(&cfg.name, cfg.train_config(), model, cfg.sim.clone(), clips)?;
    // one JSON line of metrics per iteration
    trainer.run(&mut JsonlMetrics::new(stdout()))?;

    let meta = CheckpointMeta {
        iteration: trainer.iteration(),
        samples: trainer.samples(),
        config_source: Some(cfg.to_toml_string()),
    };
    save_bundle(trainer.bundle(), &out, meta)?;
    eprintln!("saved {}", out.display());
    Ok(())
}
