//! Suboptimality risk between Gaussian plan costs.
//!
//! For independent costs `C_x ~ N(μx, vx)` and `C_y ~ N(μy, vy)`, the risk of
//! choosing `x` over `y` is `P(C_x − C_y > 0) = Φ(−z)` with
//! `z = (μy − μx)/√(vx + vy)`. The SOR of a plan averages that risk against
//! every other candidate.

use std::fmt;
use std::str::FromStr;

use roq_core::CostDistribution;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiskError {
    #[error("risk matrix needs at least 2 plans, got {0}")]
    TooFewPlans(usize),
    #[error("unknown uncertainty selector `{0}` (expected data, model or total)")]
    UnknownSelector(String),
}

/// Which variance component feeds the risk computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Uncertainty {
    Data,
    Model,
    Total,
}

impl Uncertainty {
    pub const ALL: [Uncertainty; 3] = [Uncertainty::Model, Uncertainty::Data, Uncertainty::Total];

    pub fn variance(self, d: &CostDistribution) -> f64 {
        match self {
            Uncertainty::Data => d.data_variance,
            Uncertainty::Model => d.model_variance,
            Uncertainty::Total => d.total_variance,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Uncertainty::Data => "data",
            Uncertainty::Model => "model",
            Uncertainty::Total => "total",
        }
    }
}

impl fmt::Display for Uncertainty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Uncertainty {
    type Err = RiskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "data" => Ok(Uncertainty::Data),
            "model" => Ok(Uncertainty::Model),
            "total" => Ok(Uncertainty::Total),
            other => Err(RiskError::UnknownSelector(other.to_string())),
        }
    }
}

/// Standard normal CDF, `Φ(z) = erfc(−z/√2)/2`.
///
/// `erfc` is the `libm` crate's port of the Sun fdlibm / musl `s_erf.c`
/// rational approximations, accurate to about one ulp, far inside 1e-7
/// absolute. Using `erfc` (not `1 + erf`) avoids cancellation in the lower
/// tail.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// `z = (μy − μx)/√(vx + vy)`; infinite (or 0 for equal means) when both
/// variances vanish.
pub fn z_score(mu_x: f64, var_x: f64, mu_y: f64, var_y: f64) -> f64 {
    let s = (var_x + var_y).sqrt();
    let d = mu_y - mu_x;
    if s > 0.0 {
        d / s
    } else if d == 0.0 {
        0.0
    } else {
        d.signum() * f64::INFINITY
    }
}

/// `P(C_x − C_y > 0)` under independence. With zero total variance the
/// costs are point masses: 0 if `μx < μy`, 1 if `μx > μy`, 0.5 if equal.
pub fn pairwise_risk(mu_x: f64, var_x: f64, mu_y: f64, var_y: f64) -> f64 {
    if var_x + var_y == 0.0 {
        return if mu_x < mu_y {
            0.0
        } else if mu_x > mu_y {
            1.0
        } else {
            0.5
        };
    }
    normal_cdf(-z_score(mu_x, var_x, mu_y, var_y))
}

/// Dense `n×n` matrices stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskMatrix {
    pub n: usize,
    /// `D[i][j] = μi − μj`.
    pub d: Vec<f64>,
    /// `S[i][j] = √(σi² + σj²)`.
    pub s: Vec<f64>,
    /// `Z = −D ⊘ S`.
    pub z: Vec<f64>,
    /// `R[i][j] = P(Ci − Cj > 0) = Φ(−Z[i][j])`; `R[i][i] = 0.5`.
    pub r: Vec<f64>,
}

impl RiskMatrix {
    pub fn d_at(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn s_at(&self, i: usize, j: usize) -> f64 {
        self.s[i * self.n + j]
    }

    pub fn z_at(&self, i: usize, j: usize) -> f64 {
        self.z[i * self.n + j]
    }

    pub fn r_at(&self, i: usize, j: usize) -> f64 {
        self.r[i * self.n + j]
    }
}

pub fn build_risk_matrix(dists: &[CostDistribution], u: Uncertainty) -> Result<RiskMatrix, RiskError> {
    let n = dists.len();
    if n < 2 {
        return Err(RiskError::TooFewPlans(n));
    }
    let mu: Vec<f64> = dists.iter().map(|d| d.mean).collect();
    let var: Vec<f64> = dists.iter().map(|d| u.variance(d)).collect();
    let mut m = RiskMatrix {
        n,
        d: vec![0.0; n * n],
        s: vec![0.0; n * n],
        z: vec![0.0; n * n],
        r: vec![0.5; n * n],
    };
    for i in 0..n {
        for j in 0..n {
            let k = i * n + j;
            m.d[k] = mu[i] - mu[j];
            m.s[k] = (var[i] + var[j]).sqrt();
            m.z[k] = if m.s[k] > 0.0 {
                -m.d[k] / m.s[k]
            } else if m.d[k] == 0.0 {
                0.0
            } else {
                -m.d[k].signum() * f64::INFINITY
            };
            if i != j {
                m.r[k] = if m.s[k] > 0.0 {
                    normal_cdf(-m.z[k])
                } else if m.d[k] < 0.0 {
                    0.0
                } else if m.d[k] > 0.0 {
                    1.0
                } else {
                    0.5
                };
            }
        }
    }
    Ok(m)
}

/// `SOR(pi) = (1/(n−1)) Σ_{j≠i} R[i][j]`.
pub fn sor(m: &RiskMatrix) -> Vec<f64> {
    let n = m.n;
    (0..n)
        .map(|i| {
            let row = &m.r[i * n..(i + 1) * n];
            let total: f64 = row.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, r)| r).sum();
            total / (n - 1) as f64
        })
        .collect()
}

/// SOR straight from distributions. A single plan has no alternative and
/// gets SOR 0.
pub fn sor_of(dists: &[CostDistribution], u: Uncertainty) -> Vec<f64> {
    match build_risk_matrix(dists, u) {
        Ok(m) => sor(&m),
        Err(_) => vec![0.0; dists.len()],
    }
}

/// Risk inherent to the plan: its data variance.
pub fn plan_risk(d: &CostDistribution) -> f64 {
    d.data_variance
}

/// Risk from the model's limited knowledge: its model variance.
pub fn estimation_risk(d: &CostDistribution) -> f64 {
    d.model_variance
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_reference_points() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(-1.41) - 0.07926984145339239).abs() < 1e-12);
        assert!((normal_cdf(1.0) - 0.8413447460685429).abs() < 1e-15);
        assert!(normal_cdf(-30.0) > 0.0);
    }

    #[test]
    fn table_one_exact_values() {
        // Exact Φ, independently checked with scipy.stats.norm.
        let cases = [
            ((8.0, 1.0, 10.0, 1.0), 0.07864960352514258, std::f64::consts::SQRT_2),
            ((8.0, 1.0, 10.0, 16.0), 0.31381290251417965, 0.48507125007266594),
            ((8.0, 16.0, 10.0, 1.0), 0.31381290251417965, 0.48507125007266594),
            ((8.0, 16.0, 10.0, 16.0), 0.36183680491588155, 0.3535533905932738),
        ];
        for ((mx, vx, my, vy), p, z) in cases {
            assert!((pairwise_risk(mx, vx, my, vy) - p).abs() < 1e-12);
            assert!((z_score(mx, vx, my, vy) - z).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_point_masses() {
        assert_eq!(pairwise_risk(1.0, 0.0, 2.0, 0.0), 0.0);
        assert_eq!(pairwise_risk(3.0, 0.0, 2.0, 0.0), 1.0);
        assert_eq!(pairwise_risk(2.0, 0.0, 2.0, 0.0), 0.5);
    }

    #[test]
    fn two_plan_matrix_and_sor() {
        let d = [
            CostDistribution::with_variance(8.0, 1.0),
            CostDistribution::with_variance(10.0, 1.0),
        ];
        let m = build_risk_matrix(&d, Uncertainty::Total).unwrap();
        assert!((m.z_at(0, 1) - std::f64::consts::SQRT_2).abs() < 1e-12);
        assert_eq!(m.r_at(0, 0), 0.5);
        let s = sor(&m);
        assert!((s[0] - 0.07864960352514258).abs() < 1e-12);
        assert!((s[1] - (1.0 - 0.07864960352514258)).abs() < 1e-12);
        assert!(build_risk_matrix(&d[..1], Uncertainty::Total).is_err());
    }

    #[test]
    fn identical_plans_are_coin_flips() {
        let d = vec![CostDistribution::new(0.4, 0.1, 0.05); 3];
        assert_eq!(sor(&build_risk_matrix(&d, Uncertainty::Total).unwrap()), vec![0.5; 3]);
    }

    #[test]
    fn selectors_and_risk_accessors() {
        let a = CostDistribution::new(0.5, 0.0, 0.2);
        let b = CostDistribution::new(0.5, 0.3, 0.0);
        assert_eq!(plan_risk(&a), 0.0);
        assert_eq!(plan_risk(&b), 0.3);
        assert_eq!(estimation_risk(&a), 0.2);
        assert_eq!(estimation_risk(&b), 0.0);
        let d = [
            CostDistribution::new(0.1, 0.2, 0.0),
            CostDistribution::new(0.3, 0.05, 0.0),
        ];
        assert_eq!(
            build_risk_matrix(&d, Uncertainty::Total).unwrap(),
            build_risk_matrix(&d, Uncertainty::Data).unwrap()
        );
        assert_eq!("total".parse::<Uncertainty>().unwrap(), Uncertainty::Total);
        assert!("both".parse::<Uncertainty>().is_err());
    }
}
