use serde::{Deserialize, Serialize};

/// Predicted cost of one plan in transformed label space.
///
/// `total_variance` is always `data_variance + model_variance`, computed once
/// at construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostDistribution {
    pub mean: f64,
    pub data_variance: f64,
    pub model_variance: f64,
    pub total_variance: f64,
}

impl CostDistribution {
    /// # Panics
    /// If either variance is negative or NaN.
    pub fn new(mean: f64, data_variance: f64, model_variance: f64) -> Self {
        assert!(
            data_variance >= 0.0 && model_variance >= 0.0,
            "variances must be non-negative (data {data_variance}, model {model_variance})"
        );
        Self {
            mean,
            data_variance,
            model_variance,
            total_variance: data_variance + model_variance,
        }
    }

    /// A distribution whose whole variance is data variance.
    pub fn with_variance(mean: f64, variance: f64) -> Self {
        Self::new(mean, variance, 0.0)
    }

    pub fn point(mean: f64) -> Self {
        Self::new(mean, 0.0, 0.0)
    }
}
