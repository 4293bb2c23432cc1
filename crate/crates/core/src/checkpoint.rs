//! Versioned JSON checkpoints holding everything needed to predict.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::io::write_json_atomic;
use crate::network::{ModelConfig, ModelParameters};
use crate::text::{Vocabulary, PAD_INDEX};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: ModelConfig,
    pub vocab_hash: String,
    pub vocabulary: Vocabulary,
    pub embedding: EmbeddingTable,
    pub params: ModelParameters,
}

impl Checkpoint {
    pub fn new(
        config: ModelConfig,
        vocabulary: Vocabulary,
        embedding: EmbeddingTable,
        params: ModelParameters,
    ) -> Result<Self> {
        let ckpt = Checkpoint {
            version: CHECKPOINT_VERSION,
            config,
            vocab_hash: vocabulary.hash(),
            vocabulary,
            embedding,
            params,
        };
        ckpt.validate()?;
        Ok(ckpt)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointMismatch(format!(
                "version {} (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        self.config.validate()?;
        if self.vocab_hash != self.vocabulary.hash() {
            return Err(Error::CheckpointMismatch(
                "stored vocabulary hash does not match its vocabulary".into(),
            ));
        }
        if self.vocabulary.max_len() != self.config.m {
            return Err(Error::CheckpointMismatch(format!(
                "vocabulary max_len {} but model m = {}",
                self.vocabulary.max_len(),
                self.config.m
            )));
        }
        let expected = (self.vocabulary.size() + 1, self.config.p);
        if self.embedding.matrix.shape() != expected {
            return Err(Error::CheckpointMismatch(format!(
                "embedding shape {:?}, expected {expected:?}",
                self.embedding.matrix.shape()
            )));
        }
        if self.embedding.row(PAD_INDEX).iter().any(|&v| v != 0.0) {
            return Err(Error::CheckpointMismatch("padding row is not zero".into()));
        }
        self.params.check_shapes(&self.config)?;
        let finite = self
            .params
            .tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
            && self.embedding.matrix.as_slice().iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::CheckpointMismatch("non-finite values".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json_atomic(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        ckpt.validate()?;
        Ok(ckpt)
    }

    pub fn expect_config(&self, config: &ModelConfig) -> Result<()> {
        if &self.config != config {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint config {:?} differs from requested {config:?}",
                self.config
            )));
        }
        Ok(())
    }

    pub fn expect_vocab_hash(&self, hash: &str) -> Result<()> {
        if self.vocab_hash != hash {
            return Err(Error::CheckpointMismatch(format!(
                "vocabulary hash {} differs from {hash}",
                self.vocab_hash
            )));
        }
        Ok(())
    }
}
