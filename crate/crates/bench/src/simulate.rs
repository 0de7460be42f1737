//! Ground-truth execution times and the dynamic timeout rule.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use roq_core::{Label, Operator, PlanTree, QueryGraph};
use serde::{Deserialize, Serialize};

use crate::cost::{node_rows, plan_cost, CardinalityFactors, CostConstants};
use crate::BenchError;

/// Simulated times never drop below this many seconds.
pub const MIN_EXECUTION_TIME: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanCostProfile {
    /// Seconds at the optimizer's estimated cardinalities.
    pub base_cost: f64,
    /// Multiplier on the cost change caused by cardinality error.
    pub sensitivity: f64,
    /// Standard deviation of the additive run-to-run noise, seconds.
    pub noise_scale: f64,
}

impl PlanCostProfile {
    pub fn new(base_cost: f64, sensitivity: f64, noise_scale: f64) -> Result<Self, BenchError> {
        let p = Self {
            base_cost,
            sensitivity,
            noise_scale,
        };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<(), BenchError> {
        if !(self.base_cost > 0.0 && self.base_cost.is_finite()) {
            return Err(BenchError::InvalidProfile(format!("base cost {}", self.base_cost)));
        }
        if !(self.sensitivity >= 0.0 && self.sensitivity.is_finite()) {
            return Err(BenchError::InvalidProfile(format!("sensitivity {}", self.sensitivity)));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(BenchError::InvalidProfile(format!("noise scale {}", self.noise_scale)));
        }
        Ok(())
    }

    /// Profile of `plan` under the true cost constants. The noise fraction
    /// moves from `noise.0` to `noise.1` with the share of nested-loops joins.
    pub fn for_plan(plan: &PlanTree, query: &QueryGraph, consts: &CostConstants, noise: (f64, f64)) -> Self {
        let rows = node_rows(plan, query, &CardinalityFactors::exact(query), consts);
        let base_cost = plan_cost(plan, query, &rows, consts);
        let joins = plan.nodes.iter().filter(|n| n.operator.is_join()).count();
        let nl = plan.count_operator(Operator::NestedLoopsJoin);
        let share = if joins == 0 { 0.0 } else { nl as f64 / joins as f64 };
        Self {
            base_cost,
            sensitivity: 1.0,
            noise_scale: base_cost * (noise.0 + (noise.1 - noise.0) * share),
        }
    }
}

/// `base + sensitivity * (cost at true rows - base) + noise`, clamped to
/// [`MIN_EXECUTION_TIME`].
pub fn simulate_execution(
    plan: &PlanTree,
    query: &QueryGraph,
    profile: &PlanCostProfile,
    true_rows: &[f64],
    seed: u64,
) -> f64 {
    let true_cost = plan_cost(plan, query, true_rows, &CostConstants::default());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z: f64 = StandardNormal.sample(&mut rng);
    let t = profile.base_cost + profile.sensitivity * (true_cost - profile.base_cost) + profile.noise_scale * z;
    t.max(MIN_EXECUTION_TIME)
}

/// Runs are capped at `ceil(10 * best so far)`; the first is never capped.
pub fn apply_timeout(times: &[f64]) -> Vec<Label> {
    let mut out = Vec::with_capacity(times.len());
    let mut best = f64::INFINITY;
    for &t in times {
        let label = if best.is_finite() {
            let threshold = (10.0 * best).ceil();
            if t > threshold {
                Label {
                    execution_time: threshold,
                    timed_out: true,
                }
            } else {
                Label::completed(t)
            }
        } else {
            Label::completed(t)
        };
        best = best.min(label.execution_time);
        out.push(label);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timeout_examples() {
        assert_eq!(
            apply_timeout(&[0.42, 9.0]),
            vec![
                Label::completed(0.42),
                Label {
                    execution_time: 5.0,
                    timed_out: true
                }
            ]
        );
        assert_eq!(apply_timeout(&[1.0]), vec![Label::completed(1.0)]);
        assert_eq!(
            apply_timeout(&[2.0, 19.0, 21.0]),
            vec![
                Label::completed(2.0),
                Label::completed(19.0),
                Label {
                    execution_time: 20.0,
                    timed_out: true
                }
            ]
        );
        assert!(apply_timeout(&[]).is_empty());
    }

    #[test]
    fn invalid_profiles_rejected() {
        assert!(PlanCostProfile::new(0.0, 1.0, 0.0).is_err());
        assert!(PlanCostProfile::new(1.0, -1.0, 0.0).is_err());
        assert!(PlanCostProfile::new(1.0, 1.0, f64::NAN).is_err());
    }
}
