use serde::{Deserialize, Serialize};

use crate::ModelError;

/// Architecture and training knobs. Every field has a default so partial
/// config files work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub graph_layers: usize,
    pub tree_layers: usize,
    pub hidden: usize,
    /// Applied after every hidden layer. 0 disables MC dropout entirely.
    pub dropout: f64,
    pub learning_rate: f64,
    /// Target plans per minibatch. Queries are never split across batches.
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    /// Default T for MC-dropout inference.
    pub mc_iterations: usize,
    /// Size of the one-hot table-id vocabulary; larger ids wrap around.
    pub table_vocab: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            graph_layers: 2,
            tree_layers: 2,
            hidden: 64,
            dropout: 0.1,
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            plateau_factor: 0.5,
            plateau_patience: 5,
            mc_iterations: 10,
            table_vocab: roq_core::DEFAULT_CATALOG_SIZE,
        }
    }
}

impl ModelConfig {
    pub fn check(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.graph_layers == 0 || self.tree_layers == 0 {
            return bad("graph_layers and tree_layers must be >= 1");
        }
        if self.hidden < 2 {
            return bad("hidden must be >= 2");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be >= 1");
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor <= 1.0) {
            return bad("plateau_factor must lie in (0, 1]");
        }
        if self.mc_iterations == 0 {
            return bad("mc_iterations must be >= 1");
        }
        if self.table_vocab == 0 {
            return bad("table_vocab must be >= 1");
        }
        Ok(())
    }
}
