use std::time::Instant;

use roq_bench::generate_workload;
use roq_core::{Label, Operator, PlanNode, PlanTree, Split, WorkloadSample};
use roq_model::{
    aggregate, fit_preprocess, prediction_csv, train, CostModel, ModelConfig, ModelError, PREDICTION_HEADER,
};

fn small_config() -> ModelConfig {
    ModelConfig {
        hidden: 16,
        max_epochs: 4,
        ..ModelConfig::default()
    }
}

fn workload(seed: u64, n: usize) -> Vec<WorkloadSample> {
    generate_workload(seed, n, 3, 24).unwrap()
}

fn untrained(samples: &[WorkloadSample], cfg: ModelConfig) -> CostModel {
    let train: Vec<&WorkloadSample> = samples.iter().filter(|s| s.split == Split::Train).collect();
    let stats = fit_preprocess(train, cfg.table_vocab).unwrap();
    CostModel::init(cfg, stats, 9).unwrap()
}

#[test]
fn stats_come_from_the_train_split_only() {
    let mut w = workload(3, 40);
    let test = w.iter().position(|s| s.split == Split::Test).unwrap();
    for l in &mut w[test].labels {
        l.execution_time = 1e4;
    }
    let train_only = fit_preprocess(w.iter().filter(|s| s.split == Split::Train), 24).unwrap();
    let with_test = fit_preprocess(w.iter().filter(|s| s.split != Split::Validation), 24).unwrap();
    assert_ne!(train_only, with_test);
    assert!(train_only.label_log_max < 4.0);
    assert!(train_only.transform_label(1e4) > 1.0);
}

#[test]
fn non_positive_labels_are_rejected() {
    let mut w = workload(3, 10);
    w[0].labels[0] = Label::completed(0.0);
    assert!(matches!(fit_preprocess(&w, 24), Err(ModelError::BadLabel(_))));
    assert!(matches!(
        fit_preprocess(&w[1..2], 24),
        Err(ModelError::TooFewSamples(1))
    ));
}

#[test]
fn deterministic_forward_and_sigmoid_range() {
    let w = workload(4, 30);
    let m = untrained(&w, small_config());
    for s in &w {
        for p in &s.plans {
            let a = m.forward(&s.query, p).unwrap();
            assert_eq!(a, m.forward(&s.query, p).unwrap());
            assert!(a.0 > 0.0 && a.0 < 1.0);
        }
    }
}

#[test]
fn plan_with_foreign_table_is_rejected() {
    let w = workload(4, 10);
    let m = untrained(&w, small_config());
    let n = w[0].query.nodes.len();
    let bad = PlanTree {
        nodes: vec![PlanNode::leaf(Operator::TableScan, n + 3)],
        root: 0,
    };
    assert!(matches!(
        m.forward(&w[0].query, &bad),
        Err(ModelError::UnknownTable { .. })
    ));
}

#[test]
fn mc_passes_vary_but_repeat_under_a_seed() {
    let w = workload(5, 30);
    let m = untrained(&w, small_config());
    let (q, p) = (&w[0].query, &w[0].plans[0]);
    let mut differ = 0;
    for k in 0..100 {
        let a = m.mc_inference(q, p, 1, 2 * k).unwrap();
        let b = m.mc_inference(q, p, 1, 2 * k + 1).unwrap();
        if a != b {
            differ += 1;
        }
    }
    assert!(differ >= 99, "only {differ} of 100 pairs differed");
    let a = m.mc_inference(q, p, 10, 42).unwrap();
    assert_eq!(a.samples.len(), 10);
    assert_eq!(a, m.mc_inference(q, p, 10, 42).unwrap());
    assert!(a.samples.iter().all(|s| s.1 >= 0.0));
    assert_eq!(m.mc_inference(q, p, 1, 42).unwrap().samples.len(), 1);
    assert_eq!(aggregate(&m.mc_inference(q, p, 1, 3).unwrap()).model_variance, 0.0);
}

#[test]
fn zero_dropout_removes_model_variance() {
    let w = workload(5, 30);
    let m = untrained(
        &w,
        ModelConfig {
            dropout: 0.0,
            ..small_config()
        },
    );
    for s in &w {
        for d in m.predict_query(&s.query, &s.plans, 20, 1).unwrap() {
            assert_eq!(d.model_variance, 0.0);
            assert_eq!(d.total_variance, d.data_variance);
        }
    }
}

#[test]
fn training_makes_progress_and_repeats_exactly() {
    let w = workload(6, 80);
    let cfg = small_config();
    let (a, log) = train(&w, &cfg, 11).unwrap();
    assert!(log.best_validation_nll < log.initial_validation_nll);
    assert!(!log.epochs.is_empty());
    let (b, _) = train(&w, &cfg, 11).unwrap();
    assert_eq!(a.to_checkpoint().unwrap(), b.to_checkpoint().unwrap());
    let (c, _) = train(&w, &cfg, 12).unwrap();
    assert_ne!(a.to_checkpoint().unwrap(), c.to_checkpoint().unwrap());
}

#[test]
fn training_requires_both_splits() {
    let mut w = workload(6, 20);
    w.iter_mut().for_each(|s| s.split = Split::Train);
    assert!(matches!(
        train(&w, &small_config(), 1),
        Err(ModelError::EmptySplit("validation"))
    ));
}

#[test]
fn checkpoints_round_trip_through_disk() {
    let w = workload(7, 30);
    let m = untrained(&w, small_config());
    let dir = std::env::temp_dir().join(format!("roq-model-ck-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("model.json");
    m.save(&path).unwrap();
    let back = CostModel::load(&path).unwrap();
    let s = &w[0];
    assert_eq!(
        m.predict_query(&s.query, &s.plans, 5, 3).unwrap(),
        back.predict_query(&s.query, &s.plans, 5, 3).unwrap()
    );
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn prediction_table_is_reproducible() {
    let w = workload(8, 30);
    let m = untrained(&w, small_config());
    assert!(m.predict_workload(std::iter::empty(), 10, 1).unwrap().is_empty());
    let a = m.predict_workload(w.iter().enumerate(), 10, 1).unwrap();
    let b = m.predict_workload(w.iter().enumerate(), 10, 1).unwrap();
    let csv = prediction_csv(&a, false);
    assert_eq!(csv, prediction_csv(&b, false));
    assert!(csv.starts_with(PREDICTION_HEADER));
    let rows = csv.lines().count() - 1;
    assert_eq!(rows, w.iter().map(|s| s.plans.len()).sum::<usize>());
    // A subset predicts exactly what the full run predicted for it.
    let sub = m.predict_workload(w.iter().enumerate().skip(5).take(2), 10, 1).unwrap();
    assert_eq!(sub[0].dists, a[5].dists);
}

#[test]
fn inference_time_grows_with_t() {
    let w = workload(9, 20);
    let m = untrained(&w, small_config());
    let mut times = Vec::new();
    for t in [5, 10, 50, 100] {
        let mut runs: Vec<f64> = (0..5)
            .map(|r| {
                let start = Instant::now();
                m.predict_workload(w.iter().enumerate(), t, r).unwrap();
                start.elapsed().as_secs_f64()
            })
            .collect();
        runs.sort_by(f64::total_cmp);
        times.push(runs[2]);
    }
    assert!(times.windows(2).all(|p| p[0] < p[1]), "{times:?}");
}
