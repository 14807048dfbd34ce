use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{io_error, ServiceError};
use crate::adversarial::DiscriminatorEnsemble;
use crate::motion::FeatureKind;
use crate::nn::{LayerSpec, Network, RunningNormalizer, Tensor};
use crate::physics::{CharacterModel, SimConfig};
use crate::rl::{ActorCritic, ClipMeta, PolicyBundle, TrainConfig};

pub const CHECKPOINT_FORMAT: &str = "advmimic-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A named row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamRecord {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

impl ParamRecord {
    pub fn of(name: &str, t: &Tensor) -> Self {
        ParamRecord { name: name.into(), shape: [t.nrows(), t.ncols()], data: t.iter().copied().collect() }
    }

    pub fn tensor(&self) -> Result<Tensor, ServiceError> {
        Tensor::from_shape_vec((self.shape[0], self.shape[1]), self.data.clone()).map_err(|_| {
            ServiceError::Input(format!(
                "parameter `{}` has {} values for shape {:?}",
                self.name,
                self.data.len(),
                self.shape
            ))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkRecord {
    pub input: usize,
    pub layers: Vec<LayerSpec>,
    pub params: Vec<ParamRecord>,
}

impl NetworkRecord {
    pub fn of(net: &Network) -> Self {
        NetworkRecord {
            input: net.input_dim(),
            layers: net.specs().to_vec(),
            params: net.params().iter().map(|p| ParamRecord::of(&p.name, &p.value)).collect(),
        }
    }

    pub fn network(&self) -> Result<Network, ServiceError> {
        let params = self.params.iter().map(|p| Ok((p.name.clone(), p.tensor()?))).collect::<Result<_, ServiceError>>()?;
        Network::from_params(self.input, &self.layers, params)
            .map_err(|e| ServiceError::Input(format!("checkpoint network: {e}")))
    }
}

/// Training progress stored alongside the weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub iteration: usize,
    pub samples: u64,
    /// Raw text of the run config.
    pub config_source: Option<String>,
}

/// Everything needed to run a trained behavior, as versioned JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub name: String,
    pub meta: CheckpointMeta,
    pub model: CharacterModel,
    pub sim: SimConfig,
    pub observation: FeatureKind,
    pub clips: Vec<ClipMeta>,
    pub config: TrainConfig,
    pub policy: NetworkRecord,
    pub log_std: ParamRecord,
    pub value: NetworkRecord,
    pub state_normalizer: RunningNormalizer,
    pub discriminator: NetworkRecord,
    pub discriminator_normalizer: RunningNormalizer,
}

impl Checkpoint {
    pub fn from_bundle(b: &PolicyBundle, meta: CheckpointMeta) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            name: b.name.clone(),
            meta,
            model: b.model.clone(),
            sim: b.sim.clone(),
            observation: b.observation,
            clips: b.clips.clone(),
            config: b.config.clone(),
            policy: NetworkRecord::of(&b.actor.policy),
            log_std: ParamRecord::of("log_std", &b.actor.log_std),
            value: NetworkRecord::of(&b.actor.value),
            state_normalizer: b.actor.normalizer.clone(),
            discriminator: NetworkRecord::of(b.ensemble.net()),
            discriminator_normalizer: b.ensemble.normalizer().clone(),
        }
    }

    pub fn into_bundle(self) -> Result<PolicyBundle, ServiceError> {
        let actor = ActorCritic::from_parts(
            self.policy.network()?,
            self.log_std.tensor()?,
            self.value.network()?,
            self.state_normalizer,
        );
        let ensemble = DiscriminatorEnsemble::from_parts(
            self.discriminator.network()?,
            self.discriminator_normalizer,
            self.config.discriminator.discriminator_learning_rate,
        );
        let bundle = PolicyBundle {
            name: self.name,
            model: self.model,
            sim: self.sim,
            actor,
            ensemble,
            observation: self.observation,
            clips: self.clips,
            config: self.config,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    /// Parses a checkpoint. The format tag and version are checked before
    /// anything else, so an old file fails with a version error rather than a
    /// field error.
    pub fn from_json(text: &str) -> Result<Self, ServiceError> {
        #[derive(Deserialize)]
        struct Header {
            format: Option<String>,
            version: Option<u64>,
        }
        let bad = |m: String| ServiceError::Input(format!("checkpoint: {m}"));
        let h: Header = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        if h.format.as_deref() != Some(CHECKPOINT_FORMAT) {
            return Err(bad(format!("not an {CHECKPOINT_FORMAT} file")));
        }
        match h.version {
            Some(v) if v == CHECKPOINT_VERSION as u64 => {}
            found => return Err(ServiceError::Version { found: found.unwrap_or(0), expected: CHECKPOINT_VERSION }),
        }
        serde_json::from_str(text).map_err(|e| bad(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ServiceError> {
        let path = path.as_ref();
        // Write then rename, so a crash never leaves a truncated checkpoint.
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, self.to_json()).map_err(|e| io_error(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| io_error(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        Checkpoint::from_json(&text).map_err(|e| match e {
            ServiceError::Input(m) => ServiceError::Input(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

pub fn save_bundle(bundle: &PolicyBundle, path: impl AsRef<Path>, meta: CheckpointMeta) -> Result<(), ServiceError> {
    Checkpoint::from_bundle(bundle, meta).save(path)
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<PolicyBundle, ServiceError> {
    Checkpoint::load(path)?.into_bundle()
}
