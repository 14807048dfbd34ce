//! Generates the procedural motion clips and writes them as JSON.

use advmimic::motion::{generate_procedural_clips, ClipSpec};
use advmimic::physics::CharacterModel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "clips".into());
    std::fs::create_dir_all(&out)?;
    let model = CharacterModel::biped();
    for template in ["stand", "walk"] {
        for clip in generate_procedural_clips(&ClipSpec::new(template), &model)? {
            let path = format!("{out}/{}.json", clip.name);
            clip.save(&path)?;
            println!("{path}: {} frames at {} fps, {:.2} s{}", clip.len(), clip.fps, clip.duration(), if clip.cyclic { ", cyclic" } else { "" });
        }
    }
    Ok(())
}
