//! Result structs to [`Table`]s.

use roq_bench::{MonteCarloDecomposition, VarianceDecomposition};
use roq_model::TrainingLog;
use roq_risk::{pairwise_risk, z_score};
use roq_select::Strategy;

use crate::experiments::{EvaluatedQuery, ShiftRow, SweepRow};
use crate::metrics::{MetricsReport, Spearman, StrategyRecord};
use crate::output::{num, timing, Table};

fn spearman_cell(s: Spearman) -> String {
    s.value().map_or_else(|| "undefined".into(), num)
}

fn param_cells(r: &StrategyRecord) -> [String; 4] {
    let p = &r.params;
    let na = || "NA".to_string();
    [
        if r.strategy == Strategy::Base {
            na()
        } else {
            p.uncertainty.to_string()
        },
        if r.strategy.uses_f_s() { num(p.f_s) } else { na() },
        if r.strategy.prunes() { num(p.f_er) } else { na() },
        if r.strategy.prunes() { num(p.f_pr) } else { na() },
    ]
}

pub fn metrics_table(report: &MetricsReport, with_timing: bool) -> Table {
    let mut t = Table::new(&[
        "strategy",
        "uncertainty",
        "f_s",
        "f_er",
        "f_pr",
        "qerr_p50",
        "qerr_p90",
        "qerr_p95",
        "qerr_p99",
        "qerr_mean",
        "spearman",
        "subopt_median",
        "subopt_mean",
        "subopt_p95",
        "subopt_p99",
        "total_runtime_s",
        "improved_pct",
        "regressed_pct",
        "unchanged_pct",
        "infer_ms",
    ]);
    for r in &report.records {
        let mut row = vec![r.strategy.tag().to_string()];
        row.extend(param_cells(r));
        let (q, s) = (&r.q_error, &r.suboptimality);
        row.extend([q.p50, q.p90, q.p95, q.p99, q.mean].map(num));
        row.push(spearman_cell(r.spearman));
        row.extend([s.p50, s.mean, s.p95, s.p99, r.total_runtime].map(num));
        row.extend(r.shares.map(num));
        row.push(timing(r.infer_ms, with_timing));
        t.push(row);
    }
    t
}

/// Suboptimality only, one row per selector and strategy.
pub fn ablation_table(report: &MetricsReport) -> Table {
    let mut t = Table::new(&["selector", "strategy", "f_s", "median", "mean", "p95", "p99"]);
    for r in &report.records {
        let [u, f_s, _, _] = param_cells(r);
        let s = &r.suboptimality;
        let mut row = vec![u, r.strategy.tag().to_string(), f_s];
        row.extend([s.p50, s.mean, s.p95, s.p99].map(num));
        t.push(row);
    }
    t
}

pub fn selection_table(queries: &[EvaluatedQuery], chosen: &[usize]) -> Table {
    let mut t = Table::new(&[
        "query_id",
        "chosen_plan",
        "chosen_time_s",
        "best_time_s",
        "suboptimality",
    ]);
    for (q, &c) in queries.iter().zip(chosen) {
        let best = q.times.iter().copied().fold(f64::INFINITY, f64::min);
        t.push(vec![
            q.query_id.to_string(),
            c.to_string(),
            num(q.times[c]),
            num(best),
            num(q.times[c] / best),
        ]);
    }
    t
}

pub fn shift_table(rows: &[ShiftRow]) -> Table {
    let mut t = Table::new(&[
        "seed",
        "n_queries",
        "full_qerr_p50",
        "full_qerr_p95",
        "full_qerr_mean",
        "full_spearman",
        "shifted_qerr_p50",
        "shifted_qerr_p95",
        "shifted_qerr_mean",
        "shifted_spearman",
        "delta_qerr_p50",
        "delta_qerr_p95",
        "delta_qerr_mean",
        "delta_spearman",
    ]);
    for r in rows {
        let mut row = vec![r.seed.to_string(), r.n_queries.to_string()];
        for a in [&r.full, &r.shifted] {
            row.extend([a.q_error.p50, a.q_error.p95, a.q_error.mean].map(num));
            row.push(spearman_cell(a.spearman));
        }
        row.extend(r.q_error_delta().map(num));
        row.push(r.spearman_delta().map_or_else(|| "undefined".into(), num));
        t.push(row);
    }
    t
}

pub fn sweep_table(rows: &[SweepRow], with_timing: bool) -> Table {
    let mut t = Table::new(&[
        "t",
        "infer_ms_per_query",
        "subopt_median",
        "subopt_mean",
        "agreement_with_max_t",
    ]);
    for r in rows {
        t.push(vec![
            r.t.to_string(),
            timing(r.infer_ms, with_timing),
            num(r.subopt_median),
            num(r.subopt_mean),
            num(r.agreement),
        ]);
    }
    t
}

pub fn training_table(log: &TrainingLog) -> Table {
    let mut t = Table::new(&["epoch", "train_nll", "validation_nll", "learning_rate", "best"]);
    t.push(vec![
        "0".into(),
        "NA".into(),
        num(log.initial_validation_nll),
        "NA".into(),
        "false".into(),
    ]);
    for e in &log.epochs {
        t.push(vec![
            e.epoch.to_string(),
            num(e.train_nll),
            num(e.validation_nll),
            format!("{:e}", e.learning_rate),
            (e.epoch == log.best_epoch).to_string(),
        ]);
    }
    t
}

/// Means 8 and 10 with standard deviations drawn from {1, 4}.
pub const RISK_SCENARIOS: [(f64, f64, f64, f64); 4] = [
    (8.0, 1.0, 10.0, 1.0),
    (8.0, 1.0, 10.0, 4.0),
    (8.0, 4.0, 10.0, 1.0),
    (8.0, 4.0, 10.0, 4.0),
];

/// `P(X > Y)` and the z-score of `Y − X` for each scenario.
pub fn risk_scenarios() -> Vec<(f64, f64)> {
    RISK_SCENARIOS
        .iter()
        .map(|&(mx, sx, my, sy)| {
            let (vx, vy) = (sx * sx, sy * sy);
            (pairwise_risk(mx, vx, my, vy), z_score(mx, vx, my, vy))
        })
        .collect()
}

pub fn scenario_table() -> Table {
    let mut t = Table::new(&["mu_x", "sigma_x", "mu_y", "sigma_y", "z", "risk_pct"]);
    for (&(mx, sx, my, sy), (r, z)) in RISK_SCENARIOS.iter().zip(risk_scenarios()) {
        t.push(vec![num(mx), num(sx), num(my), num(sy), num(z), num(100.0 * r)]);
    }
    t
}

/// `|estimate − exact| / |exact|`, absolute when the exact value is 0.
pub fn relative_error(exact: f64, estimate: f64) -> f64 {
    if exact == 0.0 {
        estimate.abs()
    } else {
        (estimate - exact).abs() / exact.abs()
    }
}

pub fn decompose_table(closed: &VarianceDecomposition, mc: &MonteCarloDecomposition) -> Table {
    let mut t = Table::new(&["term", "closed_form", "monte_carlo", "relative_error"]);
    let m = &mc.terms;
    for (name, c, s) in [
        ("data", closed.data_term, m.data_term),
        ("model", closed.model_term, m.model_term),
        ("total", closed.total, m.total),
        ("total_direct", closed.total, mc.total_direct),
    ] {
        t.push(vec![name.into(), num(c), num(s), num(relative_error(c, s))]);
    }
    t
}
