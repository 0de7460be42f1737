//! Linear parametric cost function `f(x) = a·x + b` with Gaussian slope,
//! intercept and input cardinality, and the two-term split of its variance
//! into a cardinality-driven part and a parameter-driven part.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::BenchError;

/// Smallest sample budget accepted by [`decompose_variance_monte_carlo`].
pub const MIN_MONTE_CARLO_SAMPLES: usize = 10_000;

/// Inner-loop draws of `x` per outer draw of `(a, b)`.
const INNER_DRAWS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearPcf {
    pub mu_a: f64,
    pub sigma_a: f64,
    pub mu_b: f64,
    pub sigma_b: f64,
    pub cov_ab: f64,
    pub mu_x: f64,
    pub sigma_x: f64,
}

impl LinearPcf {
    pub fn new(
        mu_a: f64,
        sigma_a: f64,
        mu_b: f64,
        sigma_b: f64,
        cov_ab: f64,
        mu_x: f64,
        sigma_x: f64,
    ) -> Result<Self, BenchError> {
        let pcf = Self {
            mu_a,
            sigma_a,
            mu_b,
            sigma_b,
            cov_ab,
            mu_x,
            sigma_x,
        };
        pcf.check()?;
        Ok(pcf)
    }

    pub fn check(&self) -> Result<(), BenchError> {
        let all = [
            self.mu_a,
            self.sigma_a,
            self.mu_b,
            self.sigma_b,
            self.cov_ab,
            self.mu_x,
            self.sigma_x,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(BenchError::InvalidPcf("non-finite parameter".into()));
        }
        if self.sigma_a < 0.0 || self.sigma_b < 0.0 || self.sigma_x < 0.0 {
            return Err(BenchError::InvalidPcf("negative standard deviation".into()));
        }
        // Small relative slack so that cov = ±σaσb (perfect correlation) passes.
        let bound = self.sigma_a * self.sigma_b;
        if self.cov_ab.abs() > bound * (1.0 + 1e-12) {
            return Err(BenchError::InvalidPcf(format!(
                "|cov_ab| = {} exceeds sigma_a*sigma_b = {bound}",
                self.cov_ab.abs()
            )));
        }
        Ok(())
    }

    pub fn evaluate(&self, a: f64, b: f64, x: f64) -> f64 {
        a * x + b
    }
}

/// `data_term` = E[Var(f | x*, θ)], `model_term` = Var(E[f | x*, θ]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceDecomposition {
    pub data_term: f64,
    pub model_term: f64,
    pub total: f64,
}

pub fn decompose_variance_closed_form(pcf: &LinearPcf) -> VarianceDecomposition {
    let data_term = pcf.sigma_x.powi(2) * (pcf.mu_a.powi(2) + pcf.sigma_a.powi(2));
    let model_term = pcf.mu_x.powi(2) * pcf.sigma_a.powi(2) + pcf.sigma_b.powi(2) + 2.0 * pcf.mu_x * pcf.cov_ab;
    VarianceDecomposition {
        data_term,
        model_term,
        total: data_term + model_term,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloDecomposition {
    pub terms: VarianceDecomposition,
    /// Plain sample variance of `f` over all joint draws.
    pub total_direct: f64,
    pub outer_draws: usize,
    pub inner_draws: usize,
}

/// Running mean and unbiased variance (Welford).
#[derive(Default, Clone, Copy)]
struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }
}

/// Nested Monte Carlo estimate of the decomposition: `(a, b)` drawn in the
/// outer loop, `x` in the inner loop. The spread of inner means includes
/// `data_term / inner` of sampling noise, which is subtracted.
pub fn decompose_variance_monte_carlo(
    pcf: &LinearPcf,
    n_samples: usize,
    seed: u64,
) -> Result<MonteCarloDecomposition, BenchError> {
    pcf.check()?;
    if n_samples < MIN_MONTE_CARLO_SAMPLES {
        return Err(BenchError::TooFewSamples {
            requested: n_samples,
            minimum: MIN_MONTE_CARLO_SAMPLES,
        });
    }
    let outer = n_samples / INNER_DRAWS;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rho = if pcf.sigma_a > 0.0 && pcf.sigma_b > 0.0 {
        (pcf.cov_ab / (pcf.sigma_a * pcf.sigma_b)).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    let rho_c = (1.0 - rho * rho).max(0.0).sqrt();

    let mut inner_vars = Moments::default();
    let mut inner_means = Moments::default();
    let mut joint = Moments::default();
    for _ in 0..outer {
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        let a = pcf.mu_a + pcf.sigma_a * z1;
        let b = pcf.mu_b + pcf.sigma_b * (rho * z1 + rho_c * z2);
        let mut inner = Moments::default();
        for _ in 0..INNER_DRAWS {
            let zx: f64 = StandardNormal.sample(&mut rng);
            let f = pcf.evaluate(a, b, pcf.mu_x + pcf.sigma_x * zx);
            inner.push(f);
            joint.push(f);
        }
        inner_vars.push(inner.variance());
        inner_means.push(inner.mean);
    }
    let data_term = inner_vars.mean;
    let model_term = (inner_means.variance() - data_term / INNER_DRAWS as f64).max(0.0);
    Ok(MonteCarloDecomposition {
        terms: VarianceDecomposition {
            data_term,
            model_term,
            total: data_term + model_term,
        },
        total_direct: joint.variance(),
        outer_draws: outer,
        inner_draws: INNER_DRAWS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> LinearPcf {
        LinearPcf::new(2.0, 0.5, 1.0, 0.3, 0.0, 5.0, 1.0).unwrap()
    }

    #[test]
    fn closed_form_reference_case() {
        let d = decompose_variance_closed_form(&reference());
        assert!((d.data_term - 4.25).abs() < 1e-12);
        assert!((d.model_term - 6.34).abs() < 1e-12);
        assert!((d.total - 10.59).abs() < 1e-12);
    }

    #[test]
    fn zero_input_spread_zeroes_data_term() {
        let mut p = reference();
        p.sigma_x = 0.0;
        assert_eq!(decompose_variance_closed_form(&p).data_term, 0.0);
    }

    #[test]
    fn exact_parameters_zero_model_term() {
        let mut p = reference();
        p.sigma_a = 0.0;
        p.sigma_b = 0.0;
        assert_eq!(decompose_variance_closed_form(&p).model_term, 0.0);
    }

    #[test]
    fn degenerate_pcf_has_no_variance() {
        let p = LinearPcf::new(2.0, 0.0, 1.0, 0.0, 0.0, 5.0, 0.0).unwrap();
        let mc = decompose_variance_monte_carlo(&p, 20_000, 3).unwrap();
        assert!(mc.terms.data_term.abs() < 1e-18);
        assert!(mc.terms.model_term.abs() < 1e-18);
        assert!(mc.total_direct.abs() < 1e-18);
    }

    #[test]
    fn invalid_covariance_is_rejected() {
        assert!(LinearPcf::new(1.0, 0.1, 1.0, 0.1, 0.5, 1.0, 1.0).is_err());
        assert!(LinearPcf::new(1.0, -0.1, 1.0, 0.1, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn small_budget_is_rejected() {
        assert!(matches!(
            decompose_variance_monte_carlo(&reference(), 999, 1),
            Err(BenchError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn monte_carlo_is_deterministic_in_seed() {
        let a = decompose_variance_monte_carlo(&reference(), 20_000, 9).unwrap();
        let b = decompose_variance_monte_carlo(&reference(), 20_000, 9).unwrap();
        assert_eq!(a, b);
    }
}
