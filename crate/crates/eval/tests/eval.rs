use std::path::Path;
use std::process::Command;

use proptest::prelude::*;
use roq_bench::generate_workload;
use roq_core::{CostDistribution, WorkloadSample};
use roq_eval::experiments::{choices, parallel_map, predict_queries, split_ids};
use roq_eval::{
    ablation_cells, classify_queries, evaluate_strategies, q_error, run_ablation, run_inference_sweep,
    run_workload_shift, spearman, suboptimality, write_atomic, EvalError, EvaluatedQuery, LabConfig, Outcome, Spearman,
};
use roq_model::{train, CostModel, ModelConfig};
use roq_risk::{sor_of, Uncertainty};
use roq_select::{nearest_rank, ParamGrid, SelectionParams, Strategy};

fn tiny() -> ModelConfig {
    ModelConfig {
        hidden: 16,
        max_epochs: 3,
        ..ModelConfig::default()
    }
}

fn trained(seed: u64) -> (Vec<WorkloadSample>, CostModel) {
    let w = generate_workload(seed, 80, 4, 24).unwrap();
    let (m, _) = train(&w, &tiny(), seed).unwrap();
    (w, m)
}

#[test]
fn q_error_examples() {
    assert_eq!(q_error(2.0, 4.0).unwrap(), 2.0);
    assert_eq!(q_error(4.0, 2.0).unwrap(), 2.0);
    assert_eq!(q_error(3.5, 3.5).unwrap(), 1.0);
    assert!(q_error(0.0, 1.0).is_err());
    assert!(q_error(1.0, -2.0).is_err());
}

/// Rank of each value = 1 + (number smaller) + (ties − 1)/2, then textbook
/// Pearson.
fn brute_spearman(a: &[f64], b: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|x| {
                let less = v.iter().filter(|y| *y < x).count() as f64;
                let eq = v.iter().filter(|y| *y == x).count() as f64;
                1.0 + less + (eq - 1.0) / 2.0
            })
            .collect()
    };
    let (ra, rb) = (rank(a), rank(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn spearman_examples() {
    assert_eq!(
        spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(),
        Spearman::Value(1.0)
    );
    assert_eq!(
        spearman(&[1.0, 2.0, 3.0], &[30.0, 20.0, 10.0]).unwrap(),
        Spearman::Value(-1.0)
    );
    let (a, b) = ([1.0, 1.0, 2.0], [3.0, 5.0, 9.0]);
    let got = spearman(&a, &b).unwrap().value().unwrap();
    assert!((got - brute_spearman(&a, &b)).abs() <= 1e-12);
    assert_eq!(
        spearman(&[4.0, 4.0, 4.0], &[1.0, 2.0, 3.0]).unwrap(),
        Spearman::Undefined
    );
    assert!(spearman(&[1.0], &[1.0]).is_err());
    assert!(spearman(&[1.0, 2.0], &[1.0]).is_err());
}

#[test]
fn suboptimality_examples() {
    assert_eq!(suboptimality(&[2.0, 4.0], 1).unwrap(), 2.0);
    assert_eq!(suboptimality(&[2.0, 4.0], 0).unwrap(), 1.0);
    assert!(suboptimality(&[2.0, 0.0], 0).is_err());
    assert!(suboptimality(&[2.0], 3).is_err());
}

#[test]
fn workload_p99_matches_counting_oracle() {
    let (w, _) = trained(3);
    let subopt: Vec<f64> = w
        .iter()
        .map(|s| suboptimality(&s.times(), s.plans.len() - 1).unwrap())
        .collect();
    let p99 = nearest_rank(&subopt, 99.0);
    // Smallest value with at least 99% of the sample at or below it.
    let oracle = subopt
        .iter()
        .copied()
        .filter(|v| subopt.iter().filter(|x| *x <= v).count() * 100 >= 99 * subopt.len())
        .fold(f64::INFINITY, f64::min);
    assert_eq!(p99, oracle);
    for s in &w {
        assert_eq!(suboptimality(&s.times(), s.best_plan()).unwrap(), 1.0);
    }
}

#[test]
fn classification_examples() {
    let r = [1.0, 2.0, 3.0];
    assert!(classify_queries(&r, &r, 0.05)
        .unwrap()
        .iter()
        .all(|o| *o == Outcome::Unchanged));
    let half: Vec<f64> = r.iter().map(|x| x / 2.0).collect();
    assert!(classify_queries(&r, &half, 0.05)
        .unwrap()
        .iter()
        .all(|o| *o == Outcome::Improved));
    let nudged = [1.0, 2.0 + 1e-12, 3.0 - 1e-12];
    assert_eq!(
        classify_queries(&r, &nudged, 0.0).unwrap(),
        vec![Outcome::Unchanged, Outcome::Regressed, Outcome::Improved]
    );
    assert!(classify_queries(&r, &r[..2], 0.05).is_err());
    assert!(classify_queries(&r, &r, -0.1).is_err());
}

proptest! {
    #[test]
    fn q_error_is_symmetric(y in 1e-6f64..1e6, y_hat in 1e-6f64..1e6) {
        let a = q_error(y, y_hat).unwrap();
        prop_assert_eq!(a, q_error(y_hat, y).unwrap());
        prop_assert!(a >= 1.0);
    }

    #[test]
    fn shares_sum_to_100(pairs in prop::collection::vec((0.1f64..10.0, 0.1f64..10.0), 1..60), th in 0.0f64..0.5) {
        let (r, s): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let shares = roq_eval::metrics::outcome_shares(&classify_queries(&r, &s, th).unwrap());
        prop_assert!((shares.iter().sum::<f64>() - 100.0).abs() <= 0.1);
    }

    #[test]
    fn spearman_matches_brute_force(v in prop::collection::vec((0u8..6, 0u8..6), 2..30)) {
        let a: Vec<f64> = v.iter().map(|p| p.0 as f64).collect();
        let b: Vec<f64> = v.iter().map(|p| p.1 as f64).collect();
        match spearman(&a, &b).unwrap() {
            Spearman::Value(s) => prop_assert!((s - brute_spearman(&a, &b)).abs() <= 1e-12),
            Spearman::Undefined => prop_assert!(brute_spearman(&a, &b).is_nan()),
        }
    }
}

#[test]
fn parallel_map_keeps_order() {
    let v: Vec<u64> = (0..101).collect();
    assert_eq!(parallel_map(&v, |x| x * 2), v.iter().map(|x| x * 2).collect::<Vec<_>>());
    assert!(parallel_map(&Vec::<u64>::new(), |x| *x).is_empty());
}

#[test]
fn ablation_has_base_and_total_rows() {
    let (w, m) = trained(4);
    let report = run_ablation(&m, &w, 5, 1, &ParamGrid::default(), 0.05).unwrap();
    assert_eq!(report.records.len(), ablation_cells().len());
    assert_eq!(report.records[0].strategy, Strategy::Base);
    for r in &report.records {
        assert!(r.suboptimality.p50 >= 1.0);
        assert!((r.shares.iter().sum::<f64>() - 100.0).abs() <= 0.1);
    }
    // The total selector is SOR over data + model variance.
    let test = predict_queries(&m, &w, &split_ids(&w, roq_core::Split::Test), 5, 1, false).unwrap();
    let params = SelectionParams::default();
    let chosen = choices(Strategy::Risk, &test, &params).unwrap();
    for (q, c) in test.iter().zip(chosen) {
        let combined: Vec<CostDistribution> = q
            .dists
            .iter()
            .map(|d| CostDistribution::with_variance(d.mean, d.data_variance + d.model_variance))
            .collect();
        let s = sor_of(&combined, Uncertainty::Total);
        assert_eq!(roq_select::argmin(&s), Some(c));
    }
}

#[test]
fn evaluation_needs_test_queries() {
    let (_, m) = trained(4);
    let empty: Vec<EvaluatedQuery> = Vec::new();
    let r = evaluate_strategies(
        &m,
        &empty,
        &empty,
        &[(Strategy::Base, Uncertainty::Total)],
        &ParamGrid::default(),
        0.05,
    );
    assert!(matches!(r, Err(EvalError::Invalid(_))));
}

#[test]
fn shift_identity_and_validation() {
    let w = generate_workload(5, 90, 4, 24).unwrap();
    let rows = run_workload_shift(&w, &[], &tiny(), &[1, 2], 5).unwrap();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert_eq!(r.q_error_delta(), [0.0; 3]);
        assert_eq!(r.spearman_delta().unwrap_or(0.0), 0.0);
    }
    let held = run_workload_shift(&w, &[2], &tiny(), &[1], 5).unwrap();
    assert!(held[0].shifted.q_error.mean.is_finite() && held[0].full.q_error.mean.is_finite());
    assert_eq!(held, run_workload_shift(&w, &[2], &tiny(), &[1], 5).unwrap());
    assert!(run_workload_shift(&w, &[0, 1, 2, 3], &tiny(), &[1], 5).is_err());
    assert!(run_workload_shift(&w, &[9], &tiny(), &[1], 5).is_err());
}

#[test]
fn sweep_reports_one_row_per_t() {
    let (w, m) = trained(6);
    let rows = run_inference_sweep(&m, &w, &[5, 10, 25], 3, 1).unwrap();
    assert_eq!(rows.iter().map(|r| r.t).collect::<Vec<_>>(), vec![5, 10, 25]);
    assert_eq!(rows[2].agreement, 1.0);
    assert!(rows.iter().all(|r| r.infer_ms > 0.0 && r.subopt_median >= 1.0));
    assert!(rows[0].infer_ms < rows[2].infer_ms);
    assert!(run_inference_sweep(&m, &w, &[0], 3, 1).is_err());
}

#[test]
fn config_parsing_and_hash() {
    let dir = std::env::temp_dir().join(format!("roq-eval-cfg-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join("a.toml");
    std::fs::write(&p, "[model]\nhidden = 8\n").unwrap();
    let a = LabConfig::load(&p).unwrap();
    assert_eq!(a.model.hidden, 8);
    assert_eq!(a.hash(), LabConfig::load(&p).unwrap().hash());
    assert_ne!(a.hash(), LabConfig::default().hash());
    std::fs::write(&p, "[model]\nhiden = 8\n").unwrap();
    assert!(LabConfig::load(&p).is_err());
    std::fs::write(&p, "[eval]\nt_values = []\n").unwrap();
    assert!(LabConfig::load(&p).is_err());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn atomic_write_replaces_without_leftovers() {
    let dir = std::env::temp_dir().join(format!("roq-eval-atomic-{}", std::process::id()));
    let p = dir.join("nested").join("x.csv");
    write_atomic(&p, b"one").unwrap();
    write_atomic(&p, b"two").unwrap();
    assert_eq!(std::fs::read(&p).unwrap(), b"two");
    assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    std::fs::remove_dir_all(&dir).unwrap();
}

fn roq(args: &[&str]) -> (i32, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_roq")).args(args).output().unwrap();
    (
        o.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&o.stderr).into_owned(),
    )
}

#[test]
fn cli_exit_codes_and_cons_degeneracy() {
    let dir = std::env::temp_dir().join(format!("roq-eval-cli-{}", std::process::id()));
    let d = dir.to_str().unwrap();
    let (code, err) = roq(&["frobnicate"]);
    assert_eq!(code, 1);
    assert!(err.contains("Usage"), "{err}");
    assert_eq!(roq(&["table1", "--bogus"]).0, 1);
    assert_eq!(roq(&["--help"]).0, 0);
    assert_eq!(roq(&["--out", d, "train", "--workload", "/nonexistent/w.jsonl"]).0, 2);
    assert_eq!(roq(&["--out", d, "decompose", "--pcf", "1,2"]).0, 1);

    let cfg = dir.join("lab.toml");
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(&cfg, "[model]\nhidden = 16\nmax_epochs = 2\n").unwrap();
    let c = cfg.to_str().unwrap();
    let w = dir.join("workload.jsonl");
    let m = dir.join("model.json");
    let (w, m) = (w.to_str().unwrap(), m.to_str().unwrap());
    assert_eq!(
        roq(&[
            "--config",
            c,
            "--out",
            d,
            "generate",
            "--queries",
            "50",
            "--templates",
            "3"
        ])
        .0,
        0
    );
    assert_eq!(roq(&["--config", c, "--out", d, "train", "--workload", w]).0, 0);
    let select = |strategy: &str, extra: &[&str]| -> Vec<u8> {
        let mut args = vec![
            "--config",
            c,
            "--out",
            d,
            "select",
            "--workload",
            w,
            "--model",
            m,
            "--strategy",
            strategy,
        ];
        args.extend(extra);
        assert_eq!(roq(&args).0, 0);
        std::fs::read(Path::new(d).join("selections.csv")).unwrap()
    };
    assert_eq!(select("cons", &["--f-s", "0"]), select("base", &[]));
    let bad = [
        "--config",
        c,
        "--out",
        d,
        "select",
        "--workload",
        w,
        "--model",
        m,
        "--strategy",
        "cons",
    ];
    assert_eq!(roq(&[&bad[..], &["--f-s", "-1"]].concat()).0, 1);
    assert_eq!(
        roq(&[&bad[..4], &["shift", "--workload", w, "--held-out", "0,1,2"]].concat()).0,
        1
    );
    std::fs::remove_dir_all(&dir).unwrap();
}
