use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use roq_nn::gradcheck::{run_layer_case, LayerKind};
use roq_nn::{check_gradients, dropout, DropoutMode, Graph, ParamStore, Tensor};

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn suite(kind: LayerKind) {
    for seed in 0..30 {
        let r = run_layer_case(kind, seed, H).unwrap();
        assert!(r.checked > 0);
        assert!(r.max_rel_error <= TOL, "{kind:?} seed {seed}: {r:?}");
    }
}

#[test]
fn dense_gradients() {
    suite(LayerKind::Dense);
}

#[test]
fn dropout_off_gradients() {
    suite(LayerKind::DropoutOff);
}

#[test]
fn attention_gradients() {
    suite(LayerKind::Attention);
}

#[test]
fn tree_conv_gradients() {
    suite(LayerKind::TreeConv);
}

#[test]
fn gaussian_nll_gradients() {
    suite(LayerKind::GaussianNll);
}

#[test]
fn mlp_gradients() {
    suite(LayerKind::Mlp3);
}

#[test]
fn five_node_tree_through_segment_ops() {
    // Exercises concat_rows, gather with the placeholder row and all
    // segment reductions in one expression.
    let mut store = ParamStore::new();
    let w = store
        .add("w", Tensor::matrix(2, 2, vec![0.3, -0.7, 0.5, 0.2]).unwrap())
        .unwrap();
    let x = Tensor::matrix(5, 2, vec![0.1, 0.4, -0.3, 0.8, 0.6, -0.2, 0.9, 0.05, -0.45, 0.33]).unwrap();
    let r = check_gradients(&mut store, &[x], H, |g, s, v| {
        let wv = g.param(s, w);
        let h = g.matmul(v[0], wv)?;
        let seg = [0, 1, 0, 1, 1];
        let mean = g.segment_mean(h, &seg, 2)?;
        let max = g.segment_max(h, &seg, 2)?;
        let sum = g.segment_sum(h, &seg, 2)?;
        let sm = g.segment_softmax(h, &seg, 2)?;
        let sm_sum = g.segment_sum(sm, &seg, 2)?;
        let sq = g.mul(sm, h)?;
        let sq = g.segment_sum(sq, &seg, 2)?;
        let cat = g.concat_cols(&[mean, max, sum, sm_sum, sq])?;
        let e = g.exp(cat);
        Ok(g.mean(e))
    })
    .unwrap();
    assert!(r.max_rel_error <= TOL, "{r:?}");
}

#[test]
fn forward_is_bit_identical_per_seed() {
    let run = |mode: DropoutMode| {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut g = Graph::new();
        let x = g.input(Tensor::matrix(3, 4, (0..12).map(|i| i as f64 * 0.37 - 1.0).collect()).unwrap());
        let y = dropout(&mut g, x, 0.3, mode, &mut rng).unwrap();
        let s = g.sigmoid(y);
        g.value(s).values().to_vec()
    };
    for mode in [DropoutMode::Train, DropoutMode::McInference, DropoutMode::Deterministic] {
        let (a, b) = (run(mode), run(mode));
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn checker_flags_a_wrong_gradient() {
    // exp(x) built as a "gradient-free" constant: the checker must notice
    // that the analytic gradient (zero) disagrees with the numeric one.
    let mut store = ParamStore::new();
    let x = Tensor::matrix(1, 3, vec![0.2, -0.4, 0.9]).unwrap();
    let r = check_gradients(&mut store, &[x], H, |g, _, v| {
        let vals: Vec<f64> = g.value(v[0]).values().iter().map(|a| a.exp()).collect();
        let c = g.input(Tensor::matrix(1, 3, vals)?);
        Ok(g.sum(c))
    })
    .unwrap();
    assert!(r.max_rel_error > 0.5, "{r:?}");
}
