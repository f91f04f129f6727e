//! Model checkpoints: JSON serialization that round-trips every parameter
//! bit-exactly (finite f64 values survive the decimal round trip because the
//! serializer emits shortest-round-trip representations).

use crate::error::{CoreError, Result};
use crate::models::{Model, ModelConfig, ParamStore};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub params: ParamStoreData,
    /// Which training stage produced this checkpoint (0 = init).
    pub stage: usize,
    /// Base seed the producing run was launched with.
    pub seed: u64,
}

/// Serializable view of a parameter store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamStoreData {
    pub params: Vec<crate::models::Param>,
}

impl Checkpoint {
    pub fn from_model(model: &Model, stage: usize, seed: u64) -> Checkpoint {
        Checkpoint {
            model: model.config.clone(),
            params: ParamStoreData {
                params: model.store.params.clone(),
            },
            stage,
            seed,
        }
    }

    /// Rebuilds the live model, re-deriving layer wiring from the config and
    /// validating that the stored parameters match it shape-for-shape.
    pub fn to_model(&self) -> Result<Model> {
        let mut rng = crate::rng::stream(0, "checkpoint-restore", 0);
        let mut model = Model::init(&self.model, &mut rng)?;
        if model.store.params.len() != self.params.params.len() {
            return Err(CoreError::contract(
                "checkpoint",
                format!(
                    "stored parameter count {} does not match architecture ({} expected)",
                    self.params.params.len(),
                    model.store.params.len()
                ),
            ));
        }
        for (live, stored) in model.store.params.iter_mut().zip(&self.params.params) {
            if live.name != stored.name
                || live.group != stored.group
                || live.rows != stored.rows
                || live.cols != stored.cols
            {
                return Err(CoreError::contract(
                    "checkpoint",
                    format!(
                        "stored parameter {} ({:?}, {}x{}) does not match architecture slot {} ({:?}, {}x{})",
                        stored.name, stored.group, stored.rows, stored.cols,
                        live.name, live.group, live.rows, live.cols
                    ),
                ));
            }
            live.data = stored.data.clone();
        }
        Ok(model)
    }

    pub fn store(&self) -> ParamStore {
        ParamStore {
            params: self.params.params.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Checkpoint> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = std::fs::read_to_string(path)?;
        Checkpoint::from_json(&text)
    }
}
