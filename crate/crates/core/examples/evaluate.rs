//! Imitation error and push robustness of a saved policy.
//!
//! ```text
//! cargo run --release --example evaluate -- runs/stand-s0/latest.json data/configs/desk-stand.toml
//! ```

use advmimic::control::{imitation_error, robustness_sweep, EvalConfig};
use advmimic::service::{load_bundle, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let checkpoint = args.get(1).ok_or("usage: evaluate <checkpoint> <config>")?;
    let config = args.get(2).ok_or("usage: evaluate <checkpoint> <config>")?;
    let bundle = load_bundle(checkpoint)?;
    let clips = RunConfig::load(config)?.load_clips(&bundle.model)?;

    let cfg = EvalConfig { trials: 20, frames: Some(300), ..EvalConfig::default() };
    let report = imitation_error(&bundle, &clips, &cfg)?;
    println!("imitation error {:.3} ± {:.3} m", report.mean, report.std);
    println!("under 10 cm for 300 frames: {:.0}% of trials", 100.0 * report.sustained_fraction(0.1, 300));

    let cfg = EvalConfig { trials: 10, ..EvalConfig::default() };
    for row in robustness_sweep(&bundle, &clips, &[0.0, 25.0, 50.0, 100.0], &cfg)? {
        println!("impulse {:>5.1} N·s: survived {:.0} ± {:.0} frames", row.magnitude, row.mean, row.std);
    }
    Ok(())
}
