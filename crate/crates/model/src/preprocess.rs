use roq_core::WorkloadSample;
use serde::{Deserialize, Serialize};

use crate::features::{edge_features, global_features, node_features, plan_node_features};
use crate::ModelError;

/// Column-wise min-max scaler. Constant columns map to 0; values outside
/// the fitted range are not clipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMax {
    pub fn empty(dim: usize) -> Self {
        Self {
            min: vec![f64::INFINITY; dim],
            max: vec![f64::NEG_INFINITY; dim],
        }
    }

    pub fn observe(&mut self, row: &[f64]) {
        for (k, &x) in row.iter().enumerate() {
            self.min[k] = self.min[k].min(x);
            self.max[k] = self.max[k].max(x);
        }
    }

    /// Columns never observed collapse to `[0, 0]`.
    fn finish(mut self) -> Self {
        for k in 0..self.min.len() {
            if self.min[k] > self.max[k] {
                self.min[k] = 0.0;
                self.max[k] = 0.0;
            }
        }
        self
    }

    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let mut m = Self::empty(rows.first().map_or(0, Vec::len));
        rows.iter().for_each(|r| m.observe(r));
        m.finish()
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(k, &x)| {
                let span = self.max[k] - self.min[k];
                if span > 0.0 {
                    (x - self.min[k]) / span
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Scalers fitted on the training split only, plus the log10 label range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessStats {
    pub table_vocab: usize,
    pub node: MinMax,
    pub edge: MinMax,
    pub global: MinMax,
    pub plan: MinMax,
    pub label_log_min: f64,
    pub label_log_max: f64,
}

impl PreprocessStats {
    /// `log10(y)` then min-max.
    pub fn transform_label(&self, y: f64) -> f64 {
        let span = self.label_log_max - self.label_log_min;
        if span > 0.0 {
            (y.log10() - self.label_log_min) / span
        } else {
            0.0
        }
    }

    pub fn inverse_label(&self, t: f64) -> f64 {
        10f64.powf(t * (self.label_log_max - self.label_log_min) + self.label_log_min)
    }

    /// Scale of a transformed-space variance back to log10-seconds².
    pub fn log10_variance(&self, v: f64) -> f64 {
        v * (self.label_log_max - self.label_log_min).powi(2)
    }
}

pub fn fit_preprocess<'a, I>(train: I, table_vocab: usize) -> Result<PreprocessStats, ModelError>
where
    I: IntoIterator<Item = &'a WorkloadSample>,
{
    let mut node = MinMax::empty(crate::features::node_dim(table_vocab));
    let mut edge = MinMax::empty(crate::features::EDGE_DIM);
    let mut global = MinMax::empty(crate::features::GLOBAL_DIM);
    let mut plan = MinMax::empty(crate::features::PLAN_NODE_DIM);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut count = 0;
    for s in train {
        count += 1;
        node_features(&s.query, table_vocab)
            .iter()
            .for_each(|r| node.observe(r));
        edge_features(&s.query).iter().for_each(|r| edge.observe(r));
        global.observe(&global_features(&s.query));
        for p in &s.plans {
            plan_node_features(&s.query, p)?.iter().for_each(|r| plan.observe(r));
        }
        for l in &s.labels {
            if !(l.execution_time > 0.0 && l.execution_time.is_finite()) {
                return Err(ModelError::BadLabel(l.execution_time));
            }
            let y = l.execution_time.log10();
            lo = lo.min(y);
            hi = hi.max(y);
        }
    }
    if count < 2 {
        return Err(ModelError::TooFewSamples(count));
    }
    if lo > hi {
        return Err(ModelError::TooFewSamples(0));
    }
    Ok(PreprocessStats {
        table_vocab,
        node: node.finish(),
        edge: edge.finish(),
        global: global.finish(),
        plan: plan.finish(),
        label_log_min: lo,
        label_log_max: hi,
    })
}
