//! Experiment suites: strategy evaluation, uncertainty ablation, workload
//! shift and the inference-iteration sweep.

use std::collections::BTreeSet;
use std::time::Instant;

use roq_core::{CostDistribution, Split, WorkloadSample};
use roq_model::{train_on, CostModel, ModelConfig, QueryPrediction};
use roq_risk::Uncertainty;
use roq_select::{select, tune_parameters, ParamGrid, SelectionParams, Strategy, ValidationQuery};

use crate::metrics::{
    classify_queries, outcome_shares, q_error, spearman, suboptimality, MetricsReport, Quantiles, Spearman,
    StrategyRecord,
};
use crate::EvalError;

/// Worker cap from `ROQ_LAB_THREADS`; unset, unparsable or 0 means one
/// worker per available core.
pub fn worker_count() -> usize {
    let auto = || std::thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var("ROQ_LAB_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
    {
        Some(0) | None => auto(),
        Some(n) => n,
    }
}

/// Order-preserving map over contiguous chunks on scoped threads.
pub fn parallel_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = worker_count().min(items.len()).max(1);
    if workers == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| scope.spawn(|| c.iter().map(&f).collect::<Vec<R>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

/// Predictions and observed times for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatedQuery {
    pub query_id: usize,
    pub dists: Vec<CostDistribution>,
    pub times: Vec<f64>,
    pub infer_ms: f64,
}

/// Ids of the samples on `split`, in workload order.
pub fn split_ids(samples: &[WorkloadSample], split: Split) -> Vec<usize> {
    (0..samples.len()).filter(|&i| samples[i].split == split).collect()
}

/// Predicts the listed queries. Work is spread over [`worker_count`]
/// threads unless `timed`, in which case everything runs on the calling
/// thread so per-query times are not inflated by contention.
pub fn predict_queries(
    model: &CostModel,
    samples: &[WorkloadSample],
    ids: &[usize],
    t: usize,
    seed: u64,
    timed: bool,
) -> Result<Vec<EvaluatedQuery>, EvalError> {
    let run = |chunk: &[usize]| model.predict_workload(chunk.iter().map(|&i| (i, &samples[i])), t, seed);
    let preds: Vec<QueryPrediction> = if timed {
        run(ids)?
    } else {
        let chunks: Vec<&[usize]> = ids.chunks(16).collect();
        let mut out = Vec::with_capacity(ids.len());
        for r in parallel_map(&chunks, |c| run(c)) {
            out.extend(r?);
        }
        out
    };
    Ok(preds
        .into_iter()
        .map(|p| EvaluatedQuery {
            times: samples[p.query_id].times(),
            query_id: p.query_id,
            dists: p.dists,
            infer_ms: p.infer_ms,
        })
        .collect())
}

/// Q-error quantiles and pooled Spearman between predicted and observed
/// seconds over every plan of every query.
pub fn accuracy(model: &CostModel, queries: &[EvaluatedQuery]) -> Result<(Quantiles, Spearman), EvalError> {
    let mut predicted = Vec::new();
    let mut observed = Vec::new();
    for q in queries {
        for (d, &t) in q.dists.iter().zip(&q.times) {
            predicted.push(model.stats.inverse_label(d.mean));
            observed.push(t);
        }
    }
    let errors = predicted
        .iter()
        .zip(&observed)
        .map(|(&p, &y)| q_error(y, p))
        .collect::<Result<Vec<f64>, _>>()?;
    let rho = if predicted.len() >= 2 {
        spearman(&predicted, &observed)?
    } else {
        Spearman::Undefined
    };
    Ok((Quantiles::of(&errors), rho))
}

/// Per-query chosen plan under `strategy`.
pub fn choices(
    strategy: Strategy,
    queries: &[EvaluatedQuery],
    params: &SelectionParams,
) -> Result<Vec<usize>, EvalError> {
    queries
        .iter()
        .map(|q| Ok(select(strategy, &q.dists, params)?.chosen))
        .collect()
}

/// Tunes every non-base `(strategy, uncertainty)` on `validation`, then
/// scores all of them on `test` against `base`.
pub fn evaluate_strategies(
    model: &CostModel,
    validation: &[EvaluatedQuery],
    test: &[EvaluatedQuery],
    cells: &[(Strategy, Uncertainty)],
    grid: &ParamGrid,
    threshold: f64,
) -> Result<MetricsReport, EvalError> {
    if test.is_empty() {
        return Err(EvalError::Invalid("evaluation set is empty".into()));
    }
    let (q_err, rho) = accuracy(model, test)?;
    let infer_ms = test.iter().map(|q| q.infer_ms).sum::<f64>() / test.len() as f64;
    let tuning: Vec<ValidationQuery> = validation
        .iter()
        .map(|q| ValidationQuery {
            dists: q.dists.clone(),
            times: q.times.clone(),
        })
        .collect();
    let chosen_times = |chosen: &[usize]| -> Vec<f64> { test.iter().zip(chosen).map(|(q, &c)| q.times[c]).collect() };
    let reference = chosen_times(&choices(Strategy::Base, test, &SelectionParams::default())?);
    let mut records = Vec::with_capacity(cells.len());
    for &(strategy, u) in cells {
        let params = if strategy == Strategy::Base {
            SelectionParams::default()
        } else {
            tune_parameters(strategy, &tuning, grid, u)?.params
        };
        let chosen = choices(strategy, test, &params)?;
        let subopt = test
            .iter()
            .zip(&chosen)
            .map(|(q, &c)| suboptimality(&q.times, c))
            .collect::<Result<Vec<f64>, _>>()?;
        let times = chosen_times(&chosen);
        records.push(StrategyRecord {
            strategy,
            params,
            q_error: q_err,
            spearman: rho,
            suboptimality: Quantiles::of(&subopt),
            total_runtime: times.iter().sum(),
            shares: outcome_shares(&classify_queries(&reference, &times, threshold)?),
            infer_ms,
        });
    }
    Ok(MetricsReport {
        reference: Strategy::Base,
        threshold,
        records,
    })
}

/// `base` plus `risk` and `cons` under each uncertainty selector.
pub fn ablation_cells() -> Vec<(Strategy, Uncertainty)> {
    let mut cells = vec![(Strategy::Base, Uncertainty::Total)];
    for u in Uncertainty::ALL {
        cells.push((Strategy::Risk, u));
        cells.push((Strategy::Cons, u));
    }
    cells
}

/// Every strategy, risk-based ones under total uncertainty.
pub fn default_cells() -> Vec<(Strategy, Uncertainty)> {
    Strategy::ALL.iter().map(|&s| (s, Uncertainty::Total)).collect()
}

pub fn run_ablation(
    model: &CostModel,
    samples: &[WorkloadSample],
    t: usize,
    seed: u64,
    grid: &ParamGrid,
    threshold: f64,
) -> Result<MetricsReport, EvalError> {
    let val = predict_queries(model, samples, &split_ids(samples, Split::Validation), t, seed, false)?;
    let test = predict_queries(model, samples, &split_ids(samples, Split::Test), t, seed, false)?;
    evaluate_strategies(model, &val, &test, &ablation_cells(), grid, threshold)
}

/// Accuracy of one model on the held-out queries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftAccuracy {
    pub q_error: Quantiles,
    pub spearman: Spearman,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftRow {
    pub seed: u64,
    pub n_queries: usize,
    /// Trained on every template.
    pub full: ShiftAccuracy,
    /// Trained without the held-out templates.
    pub shifted: ShiftAccuracy,
}

impl ShiftRow {
    /// `shifted − full` for q-error median, p95 and mean.
    pub fn q_error_delta(&self) -> [f64; 3] {
        let (a, b) = (&self.full.q_error, &self.shifted.q_error);
        [b.p50 - a.p50, b.p95 - a.p95, b.mean - a.mean]
    }

    pub fn spearman_delta(&self) -> Option<f64> {
        Some(self.shifted.spearman.value()? - self.full.spearman.value()?)
    }
}

/// Trains one model on every template and one without `held_out`, then
/// compares them on test-split queries of the held-out templates (all test
/// queries when `held_out` is empty).
pub fn run_workload_shift(
    samples: &[WorkloadSample],
    held_out: &[u32],
    config: &ModelConfig,
    seeds: &[u64],
    t: usize,
) -> Result<Vec<ShiftRow>, EvalError> {
    let present: BTreeSet<u32> = samples.iter().map(|s| s.template_id).collect();
    let held: BTreeSet<u32> = held_out.iter().copied().collect();
    if let Some(missing) = held.iter().find(|t| !present.contains(t)) {
        return Err(EvalError::Invalid(format!("template {missing} is not in the workload")));
    }
    if !held.is_empty() && held.len() == present.len() {
        return Err(EvalError::Invalid("held-out templates cover the whole workload".into()));
    }
    if seeds.is_empty() {
        return Err(EvalError::Invalid("at least one seed is required".into()));
    }
    let on = |split: Split, keep_held: bool| -> Vec<&WorkloadSample> {
        samples
            .iter()
            .filter(|s| s.split == split && (keep_held || !held.contains(&s.template_id)))
            .collect()
    };
    let eval_ids: Vec<usize> = split_ids(samples, Split::Test)
        .into_iter()
        .filter(|&i| held.is_empty() || held.contains(&samples[i].template_id))
        .collect();
    if eval_ids.is_empty() {
        return Err(EvalError::Invalid("no test queries from the held-out templates".into()));
    }
    let (train_all, val_all) = (on(Split::Train, true), on(Split::Validation, true));
    let (train_cut, val_cut) = (on(Split::Train, false), on(Split::Validation, false));
    let one = |&seed: &u64| -> Result<ShiftRow, EvalError> {
        let measure = |train: &[&WorkloadSample], val: &[&WorkloadSample]| -> Result<ShiftAccuracy, EvalError> {
            let (model, _) = train_on(train, val, config, seed)?;
            let preds = predict_queries(&model, samples, &eval_ids, t, seed, false)?;
            let (q_error, spearman) = accuracy(&model, &preds)?;
            Ok(ShiftAccuracy { q_error, spearman })
        };
        Ok(ShiftRow {
            seed,
            n_queries: eval_ids.len(),
            full: measure(&train_all, &val_all)?,
            shifted: measure(&train_cut, &val_cut)?,
        })
    };
    parallel_map(seeds, one).into_iter().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub t: usize,
    /// Median over runs of the mean per-query inference time.
    pub infer_ms: f64,
    pub subopt_median: f64,
    pub subopt_mean: f64,
    /// Share of queries choosing the same plan as the largest T.
    pub agreement: f64,
    pub chosen: Vec<usize>,
}

/// Fraction of positions where `a` and `b` agree.
pub fn agreement(a: &[usize], b: &[usize]) -> f64 {
    if a.is_empty() {
        return f64::NAN;
    }
    a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64
}

/// SOR selection with total uncertainty on the test split for each T.
/// Timed sections run single-threaded.
pub fn run_inference_sweep(
    model: &CostModel,
    samples: &[WorkloadSample],
    t_values: &[usize],
    runs: usize,
    seed: u64,
) -> Result<Vec<SweepRow>, EvalError> {
    if t_values.is_empty() || t_values.contains(&0) || runs == 0 {
        return Err(EvalError::Invalid("sweep needs T values >= 1 and runs >= 1".into()));
    }
    let ids = split_ids(samples, Split::Test);
    if ids.is_empty() {
        return Err(EvalError::Invalid("test split is empty".into()));
    }
    let params = SelectionParams::default();
    let mut rows = Vec::with_capacity(t_values.len());
    for &t in t_values {
        let mut per_run = Vec::with_capacity(runs);
        let mut preds = Vec::new();
        for _ in 0..runs {
            let start = Instant::now();
            preds = predict_queries(model, samples, &ids, t, seed, true)?;
            per_run.push(start.elapsed().as_secs_f64() * 1e3 / ids.len() as f64);
        }
        per_run.sort_by(f64::total_cmp);
        let chosen = choices(Strategy::Risk, &preds, &params)?;
        let subopt = preds
            .iter()
            .zip(&chosen)
            .map(|(q, &c)| suboptimality(&q.times, c))
            .collect::<Result<Vec<f64>, _>>()?;
        let q = Quantiles::of(&subopt);
        rows.push(SweepRow {
            t,
            infer_ms: per_run[runs / 2],
            subopt_median: q.p50,
            subopt_mean: q.mean,
            agreement: f64::NAN,
            chosen,
        });
    }
    let reference = rows
        .iter()
        .max_by_key(|r| r.t)
        .map(|r| r.chosen.clone())
        .unwrap_or_default();
    for r in &mut rows {
        r.agreement = agreement(&r.chosen, &reference);
    }
    Ok(rows)
}
