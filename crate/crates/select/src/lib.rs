//! Plan selection over predicted cost distributions.
//!
//! Four strategies pick one plan per query: `base` (lowest mean), `risk`
//! (lowest SOR), `cons` (lowest `μ + f_s·σ`) and the pruned variants, which
//! first discard plans whose data or model variance sits above a quantile
//! threshold. Ties always go to the lowest plan index.

use std::fmt;
use std::str::FromStr;

use roq_core::CostDistribution;
use roq_risk::{estimation_risk, plan_risk, sor_of, Uncertainty};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectError {
    #[error("no candidate plans")]
    NoPlans,
    #[error("f_s must be finite and non-negative, got {0}")]
    NegativeFactor(f64),
    #[error("keep fraction must lie in (0, 1], got {0}")]
    BadFraction(f64),
    #[error("risk vectors have lengths {0} and {1} for {2} plans")]
    LengthMismatch(usize, usize, usize),
    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),
    #[error("validation set is empty")]
    EmptyValidation,
    #[error("validation query {0}: {1} distributions but {2} times")]
    ValidationShape(usize, usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "base")]
    Base,
    #[serde(rename = "risk")]
    Risk,
    #[serde(rename = "cons")]
    Cons,
    #[serde(rename = "risk_prun")]
    RiskPrun,
    #[serde(rename = "cons_prun")]
    ConsPrun,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Base,
        Strategy::Risk,
        Strategy::Cons,
        Strategy::RiskPrun,
        Strategy::ConsPrun,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Strategy::Base => "base",
            Strategy::Risk => "risk",
            Strategy::Cons => "cons",
            Strategy::RiskPrun => "risk_prun",
            Strategy::ConsPrun => "cons_prun",
        }
    }

    pub fn prunes(self) -> bool {
        matches!(self, Strategy::RiskPrun | Strategy::ConsPrun)
    }

    pub fn uses_f_s(self) -> bool {
        matches!(self, Strategy::Cons | Strategy::ConsPrun)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Strategy {
    type Err = SelectError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.tag() == s)
            .ok_or_else(|| SelectError::UnknownStrategy(s.to_string()))
    }
}

/// Knobs shared by all strategies; each one reads only what it needs.
/// `f_er` and `f_pr` are keep fractions: a plan survives pruning when its
/// risk is at or below the `⌊n·f⌋`-th smallest value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionParams {
    pub f_s: f64,
    pub f_er: f64,
    pub f_pr: f64,
    pub uncertainty: Uncertainty,
}

impl Default for SelectionParams {
    fn default() -> Self {
        Self {
            f_s: 1.0,
            f_er: 1.0,
            f_pr: 1.0,
            uncertainty: Uncertainty::Total,
        }
    }
}

impl SelectionParams {
    pub fn check(&self) -> Result<(), SelectError> {
        if !(self.f_s.is_finite() && self.f_s >= 0.0) {
            return Err(SelectError::NegativeFactor(self.f_s));
        }
        for f in [self.f_er, self.f_pr] {
            check_fraction(f)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub chosen: usize,
    /// Strategy score per plan; pruned plans score `+∞`.
    pub scores: Vec<f64>,
    pub strategy: Strategy,
    pub params: SelectionParams,
}

/// Index of the smallest value, first one on ties. NaN never wins.
pub fn argmin(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        match best {
            Some(b) if values[b] <= v => {}
            _ => best = Some(i),
        }
    }
    best
}

fn finish(scores: Vec<f64>, strategy: Strategy, params: SelectionParams) -> SelectionResult {
    // Callers guarantee at least one plan, and all-NaN scores fall back to 0.
    let chosen = argmin(&scores).unwrap_or(0);
    SelectionResult {
        chosen,
        scores,
        strategy,
        params,
    }
}

pub fn select_base(dists: &[CostDistribution]) -> Result<SelectionResult, SelectError> {
    if dists.is_empty() {
        return Err(SelectError::NoPlans);
    }
    let scores = dists.iter().map(|d| d.mean).collect();
    Ok(finish(scores, Strategy::Base, SelectionParams::default()))
}

/// Lowest SOR. A single plan is returned as is.
pub fn select_by_sor(dists: &[CostDistribution], u: Uncertainty) -> Result<SelectionResult, SelectError> {
    if dists.is_empty() {
        return Err(SelectError::NoPlans);
    }
    let params = SelectionParams {
        uncertainty: u,
        ..SelectionParams::default()
    };
    Ok(finish(sor_of(dists, u), Strategy::Risk, params))
}

pub fn conservative_scores(dists: &[CostDistribution], f_s: f64, u: Uncertainty) -> Vec<f64> {
    dists.iter().map(|d| d.mean + f_s * u.variance(d).sqrt()).collect()
}

pub fn select_conservative(
    dists: &[CostDistribution],
    f_s: f64,
    u: Uncertainty,
) -> Result<SelectionResult, SelectError> {
    if dists.is_empty() {
        return Err(SelectError::NoPlans);
    }
    if !(f_s.is_finite() && f_s >= 0.0) {
        return Err(SelectError::NegativeFactor(f_s));
    }
    let params = SelectionParams {
        f_s,
        uncertainty: u,
        ..SelectionParams::default()
    };
    Ok(finish(conservative_scores(dists, f_s, u), Strategy::Cons, params))
}

fn check_fraction(f: f64) -> Result<(), SelectError> {
    if f > 0.0 && f <= 1.0 {
        Ok(())
    } else {
        Err(SelectError::BadFraction(f))
    }
}

/// `sorted(risks)[⌊n·f⌋]`, index clamped to `n − 1`.
pub fn prune_threshold(risks: &[f64], f: f64) -> f64 {
    let mut sorted = risks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = ((risks.len() as f64 * f).floor() as usize).min(risks.len() - 1);
    sorted[k]
}

fn ranks(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut r = vec![0; values.len()];
    for (rank, i) in order.into_iter().enumerate() {
        r[i] = rank;
    }
    r
}

/// Survivors of the two-threshold filter, ascending. When no plan clears
/// both thresholds at once (the estimation-risk minimum and the plan-risk
/// minimum can be different plans) the single plan with the lowest summed
/// rank across both risks is kept instead, so the result is never empty.
pub fn prune(r_e: &[f64], r_p: &[f64], f_er: f64, f_pr: f64) -> Result<Vec<usize>, SelectError> {
    let n = r_e.len();
    if n == 0 {
        return Err(SelectError::NoPlans);
    }
    if r_p.len() != n {
        return Err(SelectError::LengthMismatch(n, r_p.len(), n));
    }
    check_fraction(f_er)?;
    check_fraction(f_pr)?;
    let phi_er = prune_threshold(r_e, f_er);
    let phi_pr = prune_threshold(r_p, f_pr);
    let kept: Vec<usize> = (0..n).filter(|&i| r_e[i] <= phi_er && r_p[i] <= phi_pr).collect();
    if !kept.is_empty() {
        return Ok(kept);
    }
    let (re, rp) = (ranks(r_e), ranks(r_p));
    let sums: Vec<f64> = (0..n).map(|i| (re[i] + rp[i]) as f64).collect();
    Ok(vec![argmin(&sums).unwrap_or(0)])
}

/// Pruning driven by the distributions' own model and data variances.
pub fn prune_dists(dists: &[CostDistribution], f_er: f64, f_pr: f64) -> Result<Vec<usize>, SelectError> {
    let r_e: Vec<f64> = dists.iter().map(estimation_risk).collect();
    let r_p: Vec<f64> = dists.iter().map(plan_risk).collect();
    prune(&r_e, &r_p, f_er, f_pr)
}

/// Keeps the scores of `survivors` and sets every other entry to `+∞`.
pub fn restrict(scores: &[f64], survivors: &[usize]) -> Vec<f64> {
    let mut out = vec![f64::INFINITY; scores.len()];
    for &i in survivors {
        out[i] = scores[i];
    }
    out
}

/// Runs `strategy` with `params`. The pruned variants score every plan on
/// the full candidate set, then restrict the score vector to the survivors,
/// so SOR still measures risk against all alternatives.
pub fn select(
    strategy: Strategy,
    dists: &[CostDistribution],
    params: &SelectionParams,
) -> Result<SelectionResult, SelectError> {
    if dists.is_empty() {
        return Err(SelectError::NoPlans);
    }
    params.check()?;
    let u = params.uncertainty;
    let scores = match strategy {
        Strategy::Base => dists.iter().map(|d| d.mean).collect(),
        Strategy::Risk | Strategy::RiskPrun => sor_of(dists, u),
        Strategy::Cons | Strategy::ConsPrun => conservative_scores(dists, params.f_s, u),
    };
    let scores = if strategy.prunes() {
        restrict(&scores, &prune_dists(dists, params.f_er, params.f_pr)?)
    } else {
        scores
    };
    Ok(finish(scores, strategy, *params))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub f_s: Vec<f64>,
    pub keep: Vec<f64>,
}

impl Default for ParamGrid {
    fn default() -> Self {
        Self {
            f_s: vec![0.0, 0.25, 0.5, 1.0, 2.0, 4.0],
            keep: vec![0.25, 0.5, 0.75, 1.0],
        }
    }
}

impl ParamGrid {
    /// Every parameter combination `strategy` reads, in grid order.
    pub fn candidates(&self, strategy: Strategy, u: Uncertainty) -> Vec<SelectionParams> {
        let base = SelectionParams {
            uncertainty: u,
            ..SelectionParams::default()
        };
        let f_s: Vec<f64> = if strategy.uses_f_s() {
            self.f_s.clone()
        } else {
            vec![base.f_s]
        };
        let keep: Vec<f64> = if strategy.prunes() {
            self.keep.clone()
        } else {
            vec![1.0]
        };
        let mut out = Vec::new();
        for &s in &f_s {
            for &er in &keep {
                for &pr in &keep {
                    out.push(SelectionParams {
                        f_s: s,
                        f_er: er,
                        f_pr: pr,
                        uncertainty: u,
                    });
                }
            }
        }
        out
    }
}

/// Predictions and observed times for one validation query.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationQuery {
    pub dists: Vec<CostDistribution>,
    pub times: Vec<f64>,
}

/// `sorted[⌈p/100·n⌉ − 1]`. Returns NaN for empty input.
pub fn nearest_rank(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = ((p / 100.0 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningOutcome {
    pub params: SelectionParams,
    pub total_runtime: f64,
    pub p99_suboptimality: f64,
}

pub fn evaluate_params(
    strategy: Strategy,
    validation: &[ValidationQuery],
    params: &SelectionParams,
) -> Result<TuningOutcome, SelectError> {
    let mut total = 0.0;
    let mut subopt = Vec::with_capacity(validation.len());
    for q in validation {
        let c = select(strategy, &q.dists, params)?.chosen;
        let best = q.times.iter().copied().fold(f64::INFINITY, f64::min);
        total += q.times[c];
        subopt.push(q.times[c] / best);
    }
    Ok(TuningOutcome {
        params: *params,
        total_runtime: total,
        p99_suboptimality: nearest_rank(&subopt, 99.0),
    })
}

/// Grid search: lowest total validation runtime, then lowest p99
/// suboptimality, then the earliest grid entry.
pub fn tune_parameters(
    strategy: Strategy,
    validation: &[ValidationQuery],
    grid: &ParamGrid,
    u: Uncertainty,
) -> Result<TuningOutcome, SelectError> {
    if validation.is_empty() {
        return Err(SelectError::EmptyValidation);
    }
    for (i, q) in validation.iter().enumerate() {
        if q.dists.len() != q.times.len() || q.dists.is_empty() {
            return Err(SelectError::ValidationShape(i, q.dists.len(), q.times.len()));
        }
    }
    let mut best: Option<TuningOutcome> = None;
    for params in grid.candidates(strategy, u) {
        let o = evaluate_params(strategy, validation, &params)?;
        let better = match &best {
            None => true,
            Some(b) => {
                o.total_runtime < b.total_runtime
                    || (o.total_runtime == b.total_runtime && o.p99_suboptimality < b.p99_suboptimality)
            }
        };
        if better {
            best = Some(o);
        }
    }
    // candidates() is never empty when the grid vectors are not.
    best.ok_or(SelectError::EmptyValidation)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn means(ms: &[f64]) -> Vec<CostDistribution> {
        ms.iter().map(|&m| CostDistribution::point(m)).collect()
    }

    fn sigma(pairs: &[(f64, f64)]) -> Vec<CostDistribution> {
        pairs
            .iter()
            .map(|&(m, s)| CostDistribution::with_variance(m, s * s))
            .collect()
    }

    #[test]
    fn base_argmin_and_ties() {
        assert_eq!(select_base(&means(&[3.0, 1.0, 2.0])).unwrap().chosen, 1);
        assert_eq!(select_base(&means(&[3.0])).unwrap().chosen, 0);
        assert_eq!(select_base(&means(&[2.0, 2.0])).unwrap().chosen, 0);
        assert_eq!(select_base(&[]), Err(SelectError::NoPlans));
    }

    #[test]
    fn sor_selection() {
        let pair = sigma(&[(8.0, 1.0), (10.0, 1.0)]);
        let r = select_by_sor(&pair, Uncertainty::Total).unwrap();
        assert_eq!(r.chosen, 0);
        assert!((r.scores[0] - 0.07864960352514258).abs() < 1e-12);
        assert_eq!(
            select_by_sor(&means(&[5.0, 4.0, 6.0]), Uncertainty::Total)
                .unwrap()
                .chosen,
            1
        );
        assert_eq!(select_by_sor(&means(&[5.0]), Uncertainty::Total).unwrap().chosen, 0);
    }

    #[test]
    fn conservative_arithmetic() {
        let pair = sigma(&[(8.0, 4.0), (10.0, 1.0)]);
        let r = select_conservative(&pair, 1.0, Uncertainty::Total).unwrap();
        assert_eq!((r.chosen, r.scores.clone()), (1, vec![12.0, 11.0]));
        let r = select_conservative(&pair, 0.25, Uncertainty::Total).unwrap();
        assert_eq!((r.chosen, r.scores.clone()), (0, vec![9.0, 10.25]));
        assert_eq!(
            select_conservative(&means(&[3.0, 1.0, 2.0]), 0.0, Uncertainty::Total)
                .unwrap()
                .chosen,
            1
        );
        assert_eq!(
            select_conservative(&pair, -0.5, Uncertainty::Total),
            Err(SelectError::NegativeFactor(-0.5))
        );
    }

    #[test]
    fn prune_traces() {
        let r_e = [0.1, 0.2, 0.3, 0.4];
        let r_p = [0.5; 4];
        assert_eq!(prune(&r_e, &r_p, 0.5, 1.0).unwrap(), vec![0, 1, 2]);
        assert_eq!(prune(&r_e, &r_p, 1.0, 1.0).unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(prune(&[], &[], 1.0, 1.0), Err(SelectError::NoPlans));
        assert_eq!(prune(&r_e, &r_p, 0.0, 1.0), Err(SelectError::BadFraction(0.0)));
    }

    #[test]
    fn prune_fallback_when_minima_disagree() {
        // Plan 0 is safest on R_e and worst on R_p, plan 2 the reverse.
        let r_e = [0.1, 0.2, 0.8, 0.9];
        let r_p = [0.9, 0.2, 0.1, 0.8];
        assert_eq!(prune(&r_e, &r_p, 0.2, 0.2).unwrap(), vec![1]);
    }

    #[test]
    fn pruned_strategy_restricts_scores() {
        let d = vec![
            CostDistribution::new(1.0, 0.01, 0.5),
            CostDistribution::new(2.0, 0.01, 0.01),
            CostDistribution::new(3.0, 0.02, 0.02),
        ];
        let p = SelectionParams {
            f_er: 0.5,
            ..SelectionParams::default()
        };
        let r = select(Strategy::ConsPrun, &d, &p).unwrap();
        assert_eq!(r.chosen, 1);
        assert_eq!(r.scores[0], f64::INFINITY);
    }

    #[test]
    fn tags_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.tag().parse::<Strategy>().unwrap(), s);
        }
        assert!("roq".parse::<Strategy>().is_err());
    }

    #[test]
    fn nearest_rank_percentiles() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(nearest_rank(&v, 50.0), 5.0);
        assert_eq!(nearest_rank(&v, 99.0), 10.0);
        assert_eq!(nearest_rank(&v, 0.0), 1.0);
    }
}
