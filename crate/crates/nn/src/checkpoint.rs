//! JSON checkpoints: `{format_version, architecture, params: {name: {shape, values}}}`.
//! Floats use shortest round-trip formatting, so save/load is bit-exact.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{NnError, ParamStore, Tensor};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredTensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub architecture: serde_json::Value,
    pub params: BTreeMap<String, StoredTensor>,
}

impl Checkpoint {
    pub fn capture(store: &ParamStore, architecture: serde_json::Value) -> Self {
        let params = store
            .iter()
            .map(|(_, p)| {
                (
                    p.name.clone(),
                    StoredTensor {
                        shape: p.value.shape().to_vec(),
                        values: p.value.values().to_vec(),
                    },
                )
            })
            .collect();
        Self {
            format_version: CHECKPOINT_VERSION,
            architecture,
            params,
        }
    }

    /// Overwrites every parameter of `store` from the checkpoint. Names and
    /// shapes must match exactly, in both directions.
    pub fn restore(&self, store: &mut ParamStore) -> Result<(), NnError> {
        if self.params.len() != store.len() {
            return Err(NnError::Checkpoint(format!(
                "checkpoint has {} parameters, model has {}",
                self.params.len(),
                store.len()
            )));
        }
        for p in store.iter_mut() {
            let s = self
                .params
                .get(&p.name)
                .ok_or_else(|| NnError::UnknownParam(p.name.clone()))?;
            if s.shape != p.value.shape() {
                return Err(NnError::ShapeMismatch {
                    op: "restore",
                    left: p.value.shape().to_vec(),
                    right: s.shape.clone(),
                });
            }
            p.value = Tensor::new(s.shape.clone(), s.values.clone())?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, NnError> {
        serde_json::to_string(self).map_err(|e| NnError::Checkpoint(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self, NnError> {
        let c: Checkpoint = serde_json::from_str(s).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        if c.format_version != CHECKPOINT_VERSION {
            return Err(NnError::Checkpoint(format!(
                "unsupported checkpoint format_version {}",
                c.format_version
            )));
        }
        Ok(c)
    }

    /// Atomic write: temp file in the same directory, then rename.
    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        let tmp = path.with_extension("tmp");
        let io = |e: std::io::Error| NnError::Checkpoint(format!("{}: {e}", path.display()));
        std::fs::write(&tmp, self.to_json()?).map_err(io)?;
        std::fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        let s = std::fs::read_to_string(path).map_err(|e| NnError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }
}
