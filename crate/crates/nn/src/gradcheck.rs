//! Central finite-difference gradient checking.

use crate::{Graph, NnError, ParamStore, Tensor, Var};

/// Denominator floor of the relative error, so components whose true
/// gradient is zero are compared on an absolute scale.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Location of the largest error, e.g. `param dense.w[3]` or `input 0[5]`.
    pub worst: String,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Compares reverse-mode gradients of `build`'s scalar loss with central
/// differences of step `h`, over every parameter scalar in `store` and
/// every input scalar. `build` must be deterministic.
pub fn check_gradients<F>(
    store: &mut ParamStore,
    inputs: &[Tensor],
    h: f64,
    build: F,
) -> Result<GradCheckReport, NnError>
where
    F: Fn(&mut Graph, &ParamStore, &[Var]) -> Result<Var, NnError>,
{
    let eval = |store: &ParamStore, inputs: &[Tensor]| -> Result<f64, NnError> {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
        let loss = build(&mut g, store, &vars)?;
        Ok(g.value(loss).item())
    };

    store.zero_grad();
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let loss = build(&mut g, store, &vars)?;
    let grads = g.backward(loss, store)?;
    let input_grads: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| grads.of(v).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec))
        .collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        worst: String::new(),
    };
    let mut record = |err: f64, loc: String| {
        report.checked += 1;
        if err > report.max_rel_error || report.worst.is_empty() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst = loc;
        }
    };

    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    for id in ids {
        let n = store.get(id).value.len();
        for k in 0..n {
            let orig = store.get(id).value.values()[k];
            store.get_mut(id).value.values_mut()[k] = orig + h;
            let up = eval(store, inputs)?;
            store.get_mut(id).value.values_mut()[k] = orig - h;
            let down = eval(store, inputs)?;
            store.get_mut(id).value.values_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = store.get(id).grad[k];
            record(
                relative_error(analytic, numeric),
                format!("param {}[{k}]", store.get(id).name),
            );
        }
    }
    let mut perturbed = inputs.to_vec();
    for (i, t) in inputs.iter().enumerate() {
        for k in 0..t.len() {
            let orig = t.values()[k];
            perturbed[i].values_mut()[k] = orig + h;
            let up = eval(store, &perturbed)?;
            perturbed[i].values_mut()[k] = orig - h;
            let down = eval(store, &perturbed)?;
            perturbed[i].values_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            record(relative_error(input_grads[i][k], numeric), format!("input {i}[{k}]"));
        }
    }
    store.zero_grad();
    Ok(report)
}

/// Layer families covered by [`run_layer_case`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Dense,
    /// Dense followed by dropout in deterministic mode.
    DropoutOff,
    Attention,
    TreeConv,
    GaussianNll,
    /// Three dense layers (relu, sigmoid, identity).
    Mlp3,
}

impl LayerKind {
    pub const ALL: [LayerKind; 6] = [
        LayerKind::Dense,
        LayerKind::DropoutOff,
        LayerKind::Attention,
        LayerKind::TreeConv,
        LayerKind::GaussianNll,
        LayerKind::Mlp3,
    ];
}

fn random_tensor<R: rand::Rng>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    let v = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::matrix(rows, cols, v).expect("sized")
}

/// `sum(out ⊙ proj)` with a fixed projection, so every output element
/// carries a distinct gradient.
fn project(g: &mut Graph, out: Var, proj: &Tensor) -> Result<Var, NnError> {
    let p = g.input(proj.clone());
    let m = g.mul(out, p)?;
    Ok(g.sum(m))
}

/// One randomized configuration (dimensions, parameters, inputs) of `kind`,
/// checked with step `h`.
pub fn run_layer_case(kind: LayerKind, seed: u64, h: f64) -> Result<GradCheckReport, NnError> {
    use crate::layers::*;
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let acts = [
        Activation::Identity,
        Activation::Relu,
        Activation::Sigmoid,
        Activation::LeakyRelu,
    ];
    match kind {
        LayerKind::Dense | LayerKind::DropoutOff => {
            let (n, i, o) = (rng.random_range(1..5), rng.random_range(1..6), rng.random_range(1..6));
            let act = acts[rng.random_range(0..acts.len())];
            let d = Dense::new(&mut store, "d", i, o, act, &mut rng)?;
            randomize(&mut store, &mut rng);
            let x = random_tensor(&mut rng, n, i);
            let proj = random_tensor(&mut rng, n, o);
            let rate = rng.random_range(0.1..0.9);
            check_gradients(&mut store, &[x], h, |g, s, v| {
                let mut y = d.forward(g, s, v[0])?;
                if kind == LayerKind::DropoutOff {
                    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(0);
                    y = dropout(g, y, rate, DropoutMode::Deterministic, &mut r)?;
                }
                project(g, y, &proj)
            })
        }
        LayerKind::Mlp3 => {
            let dims: Vec<usize> = (0..4).map(|_| rng.random_range(1..6)).collect();
            let n = rng.random_range(1..5);
            let l1 = Dense::new(&mut store, "l1", dims[0], dims[1], Activation::Relu, &mut rng)?;
            let l2 = Dense::new(&mut store, "l2", dims[1], dims[2], Activation::Sigmoid, &mut rng)?;
            let l3 = Dense::new(&mut store, "l3", dims[2], dims[3], Activation::Identity, &mut rng)?;
            randomize(&mut store, &mut rng);
            let x = random_tensor(&mut rng, n, dims[0]);
            let proj = random_tensor(&mut rng, n, dims[3]);
            check_gradients(&mut store, &[x], h, |g, s, v| {
                let a = l1.forward(g, s, v[0])?;
                let b = l2.forward(g, s, a)?;
                let c = l3.forward(g, s, b)?;
                project(g, c, &proj)
            })
        }
        LayerKind::Attention => {
            let n = rng.random_range(1..6);
            let (dn, de, dg, dout) = (
                rng.random_range(1..4),
                rng.random_range(1..4),
                rng.random_range(1..3),
                rng.random_range(1..5),
            );
            let mut pairs = Vec::new();
            for a in 0..n {
                for b in a + 1..n {
                    if rng.random::<f64>() < 0.6 {
                        pairs.push((a, b));
                    }
                }
            }
            let adj = Adjacency::from_edges(n, &pairs)?;
            let act = acts[rng.random_range(0..acts.len())];
            let l = GraphAttention::new(&mut store, "ga", dn, de, dg, dout, act, &mut rng)?;
            randomize(&mut store, &mut rng);
            let x = random_tensor(&mut rng, n, dn);
            let e = random_tensor(&mut rng, pairs.len(), de);
            let gl = random_tensor(&mut rng, 1, dg);
            let proj = random_tensor(&mut rng, n, dout);
            check_gradients(&mut store, &[x, e, gl], h, |g, s, v| {
                let y = l.forward(g, s, v[0], v[1], v[2], &adj)?;
                project(g, y, &proj)
            })
        }
        LayerKind::TreeConv => {
            // Random binary tree of up to 7 nodes, children first.
            let m = rng.random_range(1..8);
            let mut left = vec![None; m];
            let mut right = vec![None; m];
            let mut roots: Vec<usize> = Vec::new();
            for i in 0..m {
                if roots.len() >= 2 && rng.random::<bool>() {
                    right[i] = roots.pop();
                    left[i] = roots.pop();
                } else if !roots.is_empty() && rng.random::<f64>() < 0.3 {
                    left[i] = roots.pop();
                }
                roots.push(i);
            }
            let (di, dout) = (rng.random_range(1..5), rng.random_range(1..5));
            let act = acts[rng.random_range(0..acts.len())];
            let l = TreeConv::new(&mut store, "tc", di, dout, act, &mut rng)?;
            randomize(&mut store, &mut rng);
            let x = random_tensor(&mut rng, m, di);
            let seg = vec![0; m];
            let proj = random_tensor(&mut rng, 1, dout);
            check_gradients(&mut store, &[x], h, |g, s, v| {
                let y = l.forward(g, s, v[0], &left, &right)?;
                let p = dynamic_pool(g, y, &seg, 1)?;
                project(g, p, &proj)
            })
        }
        LayerKind::GaussianNll => {
            let n = rng.random_range(1..8);
            let mu = random_tensor(&mut rng, n, 1);
            let lv = random_tensor(&mut rng, n, 1);
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
            check_gradients(&mut store, &[mu, lv], h, |g, _, v| g.gaussian_nll(v[0], v[1], &y))
        }
    }
}

/// Replaces zero-initialized biases and placeholders with random values so
/// their gradients are exercised away from zero.
fn randomize<R: rand::Rng>(store: &mut ParamStore, rng: &mut R) {
    for p in store.iter_mut() {
        for v in p.value.values_mut() {
            if *v == 0.0 {
                *v = rng.random_range(-0.5..0.5);
            }
        }
    }
}
