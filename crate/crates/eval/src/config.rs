//! Lab configuration file (TOML). Every section and field is optional.

use std::path::Path;

use roq_bench::GeneratorConfig;
use roq_model::ModelConfig;
use roq_select::ParamGrid;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::metrics::DEFAULT_THRESHOLD;
use crate::output::hex;
use crate::EvalError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Relative band for improved/regressed classification.
    pub threshold: f64,
    pub t_values: Vec<usize>,
    /// Timing repetitions per T in the inference sweep.
    pub sweep_runs: usize,
    pub grid: ParamGrid,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            t_values: vec![5, 10, 25, 50, 100],
            sweep_runs: 10,
            grid: ParamGrid::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabConfig {
    pub generator: GeneratorConfig,
    pub model: ModelConfig,
    pub eval: EvalConfig,
}

impl LabConfig {
    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = toml::from_str(&text).map_err(|e| EvalError::Invalid(format!("{}: {e}", path.display())))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), EvalError> {
        self.generator.check().map_err(|e| EvalError::Invalid(e.to_string()))?;
        self.model.check().map_err(|e| EvalError::Invalid(e.to_string()))?;
        let e = &self.eval;
        if e.threshold.is_nan() || e.threshold < 0.0 {
            return Err(EvalError::Invalid(format!(
                "eval.threshold {} must be >= 0",
                e.threshold
            )));
        }
        if e.t_values.is_empty() || e.t_values.contains(&0) {
            return Err(EvalError::Invalid("eval.t_values must be non-empty and >= 1".into()));
        }
        if e.sweep_runs == 0 {
            return Err(EvalError::Invalid("eval.sweep_runs must be >= 1".into()));
        }
        if e.grid.f_s.is_empty() || e.grid.keep.is_empty() {
            return Err(EvalError::Invalid("eval.grid vectors must be non-empty".into()));
        }
        if e.grid.f_s.iter().any(|f| f.is_nan() || *f < 0.0)
            || e.grid.keep.iter().any(|f| !(0.0..=1.0).contains(f) || *f == 0.0)
        {
            return Err(EvalError::Invalid("eval.grid: f_s >= 0 and keep in (0, 1]".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, so equivalent files hash alike.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(json))
    }
}
