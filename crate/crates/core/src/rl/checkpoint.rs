use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::{PolicyNet, Trajectory};
use super::optim::RmsProp;
use super::replay::ReplayBuffer;
use super::train::{TrainConfig, Trainer};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u64 = 1;

/// Position of a ChaCha8 generator, enough to resume it exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    /// Stored as a decimal string; the word position is a u128.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        let pos: u128 = self.word_pos.parse().map_err(|_| Error::Parse {
            offset: 0,
            message: format!("bad rng word position `{}`", self.word_pos),
        })?;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

/// Everything needed to resume training or to run a frozen policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u64,
    /// `internal` or `outer`.
    pub role: String,
    pub net: PolicyNet,
    pub optimizer: RmsProp,
    pub replay: ReplayBuffer<Trajectory>,
    pub rng: RngState,
    pub episode: u64,
    pub config: TrainConfig,
    /// Free-form metadata (reward preset, window size, split seed, ...).
    #[serde(default)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl Checkpoint {
    pub fn from_trainer(trainer: &Trainer, role: &str) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            role: role.to_string(),
            net: trainer.net.clone(),
            optimizer: trainer.optimizer.clone(),
            replay: trainer.replay.clone(),
            rng: RngState::capture(&trainer.rng),
            episode: trainer.episode,
            config: trainer.config.clone(),
            extra: BTreeMap::new(),
        }
    }

    pub fn into_trainer(self) -> Result<Trainer> {
        if self.optimizer.acc.len() != self.net.n_params() {
            return Err(Error::usage("optimizer state does not match the network"));
        }
        Ok(Trainer {
            rng: self.rng.restore()?,
            net: self.net,
            optimizer: self.optimizer,
            replay: self.replay,
            episode: self.episode,
            config: self.config,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::from_json(&e, text))?;
        let version = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::Parse {
                offset: 0,
                message: "missing or non-integer format_version".into(),
            })?;
        if version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: CHECKPOINT_FORMAT_VERSION,
            });
        }
        let ckpt: Checkpoint = serde_json::from_value(value).map_err(|e| Error::Parse {
            offset: 0,
            message: e.to_string(),
        })?;
        PolicyNet::from_params(
            ckpt.net.input_dim(),
            ckpt.net.hidden_dim(),
            ckpt.net.action_dim(),
            ckpt.net.params().to_vec(),
        )?;
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Checkpoint::from_json(&fs::read_to_string(path)?)
    }
}
