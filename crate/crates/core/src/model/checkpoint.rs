use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path as FsPath;

use super::arch::Architecture;
use super::params::BlockParams;
use super::StackedModel;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "saswise-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk container for a [`StackedModel`] (JSON).
///
/// `arch_hash` is the SHA-256 of the architecture descriptor and
/// `content_hash` the SHA-256 of the serialized candidate parameters; both
/// are verified on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub arch: Architecture,
    pub arch_hash: String,
    pub counts: Vec<usize>,
    pub candidates: Vec<Vec<BlockParams>>,
    pub content_hash: String,
    #[serde(default)]
    pub config_hash: Option<String>,
}

fn content_hash(candidates: &[Vec<BlockParams>]) -> String {
    let bytes = serde_json::to_vec(candidates).expect("parameters serialize");
    hex::encode(Sha256::digest(&bytes))
}

impl Checkpoint {
    pub fn from_model(model: &StackedModel, config_hash: Option<String>) -> Self {
        let candidates = model.candidates().to_vec();
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            arch: model.arch().clone(),
            arch_hash: model.arch().hash(),
            counts: model.counts(),
            content_hash: content_hash(&candidates),
            candidates,
            config_hash,
        }
    }

    /// Verify header and hashes, then rebuild the model.
    pub fn into_model(self) -> Result<StackedModel> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format `{}`", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {}", self.version)));
        }
        if self.arch.hash() != self.arch_hash {
            return Err(Error::Checkpoint("architecture hash mismatch".into()));
        }
        if content_hash(&self.candidates) != self.content_hash {
            return Err(Error::Checkpoint("parameter content hash mismatch".into()));
        }
        let counts: Vec<usize> = self.candidates.iter().map(Vec::len).collect();
        if counts != self.counts {
            return Err(Error::Checkpoint(format!(
                "candidate counts {counts:?} disagree with header {:?}",
                self.counts
            )));
        }
        StackedModel::from_parts(self.arch, self.candidates)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<FsPath>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<FsPath>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl StackedModel {
    pub fn save(&self, path: impl AsRef<FsPath>, config_hash: Option<String>) -> Result<()> {
        Checkpoint::from_model(self, config_hash).save(path)
    }

    pub fn load(path: impl AsRef<FsPath>) -> Result<StackedModel> {
        Checkpoint::load(path)?.into_model()
    }

    /// Load and insist on a specific architecture.
    pub fn load_expecting(path: impl AsRef<FsPath>, arch: &Architecture) -> Result<StackedModel> {
        let ckpt = Checkpoint::load(path)?;
        if ckpt.arch_hash != arch.hash() {
            return Err(Error::Checkpoint("checkpoint architecture does not match the expected one".into()));
        }
        ckpt.into_model()
    }
}
