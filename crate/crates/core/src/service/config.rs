use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{io_error, ServiceError};
use crate::adversarial::GanConfig;
use crate::control::{EvalConfig, SwitchConfig};
use crate::motion::{generate_procedural_clips, ClipSpec, MotionClip};
use crate::physics::{CharacterModel, SimConfig};
use crate::rl::{PpoConfig, TrainConfig};

/// A clip file, or a procedural template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClipSource {
    Path { path: PathBuf },
    Procedural(ClipSpec),
}

/// The `[training]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub seed: u64,
    pub workers: usize,
    pub threads: usize,
    pub sample_budget: u64,
    pub init_noise: f64,
    pub overtime_limit: usize,
    pub checkpoint_every: usize,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainingSection {
            seed: t.seed,
            workers: t.workers,
            threads: t.threads,
            sample_budget: t.sample_budget,
            init_noise: t.init_noise,
            overtime_limit: t.overtime_limit,
            checkpoint_every: t.checkpoint_every,
        }
    }
}

/// A full run description, read from TOML. Relative paths resolve against
/// the directory of the file they appear in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    /// Character description; the built-in biped when absent.
    pub model: Option<PathBuf>,
    pub sim: SimConfig,
    pub clips: Vec<ClipSource>,
    pub training: TrainingSection,
    pub ppo: PpoConfig,
    pub discriminator: GanConfig,
    pub switch: SwitchConfig,
    pub eval: EvalConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
    /// The text this config was parsed from, echoed into checkpoints.
    #[serde(skip)]
    pub source: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            name: "policy".into(),
            model: None,
            sim: SimConfig::default(),
            clips: Vec::new(),
            training: TrainingSection::default(),
            ppo: PpoConfig::default(),
            discriminator: GanConfig::default(),
            switch: SwitchConfig::default(),
            eval: EvalConfig::default(),
            base_dir: PathBuf::from("."),
            source: None,
        }
    }
}

impl RunConfig {
    /// Parses TOML. `origin` names the source in diagnostics.
    pub fn from_toml_str(text: &str, origin: &str, base_dir: impl Into<PathBuf>) -> Result<Self, ServiceError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let at = e
                .span()
                .map(|s| {
                    let line = text[..s.start.min(text.len())].matches('\n').count() + 1;
                    format!(" (line {line})")
                })
                .unwrap_or_default();
            ServiceError::Config { path: origin.into(), message: format!("{}{at}", e.message()) }
        })?;
        cfg.base_dir = base_dir.into();
        cfg.source = Some(text.to_string());
        cfg.validate(origin)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        RunConfig::from_toml_str(&text, &path.display().to_string(), base)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }

    fn validate(&self, origin: &str) -> Result<(), ServiceError> {
        let err = |message: String| ServiceError::Config { path: origin.into(), message };
        if self.name.trim().is_empty() {
            return Err(err("`name` must not be empty".into()));
        }
        self.train_config().validate().map_err(|e| err(e.to_string()))?;
        self.switch.validate().map_err(|e| err(e.to_string()))?;
        for (i, c) in self.clips.iter().enumerate() {
            if let ClipSource::Procedural(spec) = c {
                if spec.variants == 0 {
                    return Err(err(format!("`clips[{i}].variants` must be at least 1")));
                }
            }
        }
        Ok(())
    }

    /// Resolves a path written in this config.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            seed: t.seed,
            workers: t.workers,
            threads: t.threads,
            sample_budget: t.sample_budget,
            init_noise: t.init_noise,
            overtime_limit: t.overtime_limit,
            checkpoint_every: t.checkpoint_every,
            ppo: self.ppo.clone(),
            discriminator: self.discriminator.clone(),
        }
    }

    pub fn load_model(&self) -> Result<CharacterModel, ServiceError> {
        match &self.model {
            None => Ok(CharacterModel::biped()),
            Some(p) => {
                let path = self.resolve(p);
                let text = std::fs::read_to_string(&path).map_err(|e| io_error(&path, e))?;
                CharacterModel::from_toml_str(&text).map_err(|e| ServiceError::Config {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })
            }
        }
    }

    pub fn load_clips(&self, model: &CharacterModel) -> Result<Vec<MotionClip>, ServiceError> {
        if self.clips.is_empty() {
            return Err(ServiceError::Input("the config lists no clips".into()));
        }
        let mut out = Vec::new();
        for c in &self.clips {
            match c {
                ClipSource::Path { path } => {
                    let path = self.resolve(path);
                    if !path.exists() {
                        return Err(ServiceError::MissingFile(path));
                    }
                    let clip = MotionClip::load(&path)?;
                    clip.check_model(model)?;
                    out.push(clip);
                }
                ClipSource::Procedural(spec) => out.extend(generate_procedural_clips(spec, model)?),
            }
        }
        Ok(out)
    }
}
