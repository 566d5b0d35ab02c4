//! JSON checkpoints with a format version.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::data::Standardizer;
use crate::error::{Error, Result};
use crate::model::{EmbeddingNetwork, Model, ModelVariant};
use crate::nn::{Layer, Sequential};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to rebuild a trained model and replay its run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub variant: ModelVariant,
    pub config: TrainConfig,
    pub seed: u64,
    pub best_epoch: usize,
    pub embedding: Sequential,
    pub tail: Option<Sequential>,
    /// Feature statistics to apply to raw inputs before embedding.
    pub standardizer: Option<Standardizer>,
}

fn revalidate(net: &Sequential) -> Result<Sequential> {
    let layers = net
        .layers()
        .iter()
        .map(|l| Layer::from_parts(*l.spec(), l.params().to_vec(), l.running().cloned()))
        .collect::<Result<Vec<_>>>()?;
    Sequential::from_layers(net.input_dim(), layers)
}

impl Checkpoint {
    pub fn new(
        model: &Model,
        config: &TrainConfig,
        best_epoch: usize,
        standardizer: Option<Standardizer>,
    ) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            variant: *model.variant(),
            config: config.clone(),
            seed: config.seed,
            best_epoch,
            embedding: model.embedding().network().clone(),
            tail: model.tail().cloned(),
            standardizer,
        }
    }

    /// Rebuild the model, checking every layer against its spec.
    pub fn model(&self) -> Result<Model> {
        let embedding = EmbeddingNetwork::from_sequential(revalidate(&self.embedding)?)?;
        let tail = self.tail.as_ref().map(revalidate).transpose()?;
        Model::from_parts(self.variant, embedding, tail)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes") + "\n"
    }

    /// Parse a checkpoint document; `name` is used in diagnostics.
    pub fn from_json(text: &str, name: &str) -> Result<Self> {
        let malformed = |message: String| Error::Malformed {
            path: name.to_string(),
            message,
        };
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
        let found = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| malformed("missing format_version".into()))?;
        if found != CHECKPOINT_VERSION as u64 {
            return Err(Error::Version {
                found: u32::try_from(found).unwrap_or(u32::MAX),
                expected: CHECKPOINT_VERSION,
            });
        }
        let ck: Checkpoint = serde_json::from_value(value).map_err(|e| malformed(e.to_string()))?;
        ck.model().map_err(|e| malformed(e.to_string()))?;
        Ok(ck)
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, checkpoint.to_json()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_json(&text, &path.display().to_string())
}
