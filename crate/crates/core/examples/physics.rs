//! Drops the biped from a standing pose and holds PD targets at rest.

use advmimic::physics::{check_early_termination, mechanical_energy, CharacterModel, SimConfig, SimState, Simulator};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = CharacterModel::biped();
    let sim = Simulator::new(model.clone(), SimConfig::default())?;
    let mut s = SimState::standing(&model);
    s.root_pos[1] += 0.2;
    let targets = s.q.clone();
    let allowed = model.allowed_contact_links();
    for frame in 0..90 {
        s = sim.step(&s, Some(&targets), &[])?;
        if frame % 10 == 0 {
            println!(
                "frame {frame:>3}: root height {:.3} m, tilt {:+.3} rad, energy {:.1} J{}",
                s.root_pos[1],
                s.root_angle,
                mechanical_energy(&model, &s, sim.config().gravity),
                if check_early_termination(&model, &s, &allowed) { ", fallen" } else { "" }
            );
        }
    }
    Ok(())
}
