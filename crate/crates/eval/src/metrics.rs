//! Accuracy and plan-quality metrics.

use std::fmt;

use roq_risk::Uncertainty;
use roq_select::{nearest_rank, SelectionParams, Strategy};
use serde::{Deserialize, Serialize};

use crate::EvalError;

/// `max(y, ŷ) / min(y, ŷ)`.
pub fn q_error(y: f64, y_hat: f64) -> Result<f64, EvalError> {
    if !(y > 0.0 && y_hat > 0.0 && y.is_finite() && y_hat.is_finite()) {
        return Err(EvalError::Invalid(format!(
            "q-error needs positive finite values, got ({y}, {y_hat})"
        )));
    }
    Ok(y.max(y_hat) / y.min(y_hat))
}

/// Rank correlation, or `Undefined` when either side has no spread.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Spearman {
    Value(f64),
    Undefined,
}

impl Spearman {
    pub fn value(self) -> Option<f64> {
        match self {
            Spearman::Value(v) => Some(v),
            Spearman::Undefined => None,
        }
    }
}

impl fmt::Display for Spearman {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Spearman::Value(v) => write!(f, "{v:.6}"),
            Spearman::Undefined => f.write_str("undefined"),
        }
    }
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Spearman {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Spearman::Undefined;
    }
    Spearman::Value((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

pub fn spearman(a: &[f64], b: &[f64]) -> Result<Spearman, EvalError> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(EvalError::Invalid(format!(
            "spearman needs equal lengths >= 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(pearson(&average_ranks(a), &average_ranks(b)))
}

/// Chosen time over the best time among the candidates.
pub fn suboptimality(times: &[f64], chosen: usize) -> Result<f64, EvalError> {
    if times.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(EvalError::Invalid("suboptimality needs positive finite times".into()));
    }
    let t = times
        .get(chosen)
        .ok_or_else(|| EvalError::Invalid(format!("chosen plan {chosen} out of {}", times.len())))?;
    let best = times.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(t / best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Improved,
    Regressed,
    Unchanged,
}

pub const DEFAULT_THRESHOLD: f64 = 0.05;

pub fn classify_queries(reference: &[f64], strategy: &[f64], threshold: f64) -> Result<Vec<Outcome>, EvalError> {
    if reference.len() != strategy.len() {
        return Err(EvalError::Invalid(format!(
            "classification needs aligned sequences, got {} and {}",
            reference.len(),
            strategy.len()
        )));
    }
    if threshold.is_nan() || threshold < 0.0 {
        return Err(EvalError::Invalid(format!("threshold {threshold} must be >= 0")));
    }
    Ok(reference
        .iter()
        .zip(strategy)
        .map(|(&r, &s)| {
            if s < (1.0 - threshold) * r {
                Outcome::Improved
            } else if s > (1.0 + threshold) * r {
                Outcome::Regressed
            } else {
                Outcome::Unchanged
            }
        })
        .collect())
}

/// Percentages of improved, regressed and unchanged; all zero when empty.
pub fn outcome_shares(outcomes: &[Outcome]) -> [f64; 3] {
    if outcomes.is_empty() {
        return [0.0; 3];
    }
    let n = outcomes.len() as f64;
    let count = |o: Outcome| outcomes.iter().filter(|&&x| x == o).count() as f64 * 100.0 / n;
    [
        count(Outcome::Improved),
        count(Outcome::Regressed),
        count(Outcome::Unchanged),
    ]
}

/// Nearest-rank percentiles plus the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub p50: f64,
    pub p90: f64,
    pub p95: f64,
    pub p99: f64,
    pub mean: f64,
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Self {
        let mean = if values.is_empty() {
            f64::NAN
        } else {
            values.iter().sum::<f64>() / values.len() as f64
        };
        Self {
            p50: nearest_rank(values, 50.0),
            p90: nearest_rank(values, 90.0),
            p95: nearest_rank(values, 95.0),
            p99: nearest_rank(values, 99.0),
            mean,
        }
    }
}

/// One strategy's numbers on an evaluation set.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyRecord {
    pub strategy: Strategy,
    /// Tuned on the validation split; defaults for `base`.
    pub params: SelectionParams,
    pub q_error: Quantiles,
    pub spearman: Spearman,
    pub suboptimality: Quantiles,
    pub total_runtime: f64,
    /// Improved, regressed, unchanged against the reference strategy.
    pub shares: [f64; 3],
    pub infer_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub reference: Strategy,
    pub threshold: f64,
    pub records: Vec<StrategyRecord>,
}

impl MetricsReport {
    pub fn record(&self, strategy: Strategy, u: Uncertainty) -> Option<&StrategyRecord> {
        self.records
            .iter()
            .find(|r| r.strategy == strategy && (strategy == Strategy::Base || r.params.uncertainty == u))
    }
}
