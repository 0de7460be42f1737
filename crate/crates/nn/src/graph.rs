//! Tape-based reverse-mode differentiation over [`Tensor`]s.
//!
//! Every operation appends a node holding its forward value. [`Graph::backward`]
//! walks the tape in reverse, so a graph is built once per forward pass and
//! dropped afterwards.

use crate::tensor::gemm;
use crate::{NnError, ParamId, ParamStore, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Exp(Var),
    Gather(Var, Vec<usize>),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SegmentSum(Var, Vec<usize>),
    SegmentMean(Var, Vec<usize>, Vec<f64>),
    /// Source row of every output element.
    SegmentMax(Var, Vec<usize>),
    SegmentSoftmax(Var, Vec<usize>),
    ScaleRows(Var, Var),
    Mask(Var, Vec<f64>),
    GaussianNll(Var, Var, Vec<f64>),
    Mean(Var),
    Sum(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of one backward pass, indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`; `None` if `v` does not
    /// influence the loss.
    pub fn of(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> NnError {
    NnError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn check_segments(op: &'static str, rows: usize, seg: &[usize], n: usize) -> Result<(), NnError> {
    if seg.len() != rows {
        return Err(NnError::ShapeMismatch {
            op,
            left: vec![rows],
            right: vec![seg.len()],
        });
    }
    if let Some(&s) = seg.iter().find(|&&s| s >= n) {
        return Err(NnError::IndexOutOfRange { op, index: s, len: n });
    }
    Ok(())
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        let t = self.value(v);
        (t.rows(), t.cols())
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input)
    }

    /// Leaf carrying a copy of a parameter; backward accumulates into the
    /// parameter's gradient slot.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.get(id).value.clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let ((m, k), (k2, n)) = (self.dims(a), self.dims(b));
        if k != k2 {
            return Err(shape_err("matmul", self.value(a), self.value(b)));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).values(),
            false,
            self.value(b).values(),
            false,
            &mut out,
            false,
        );
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b)))
    }

    /// Adds a length-`cols` vector to every row.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var, NnError> {
        let (_, c) = self.dims(x);
        if self.value(b).len() != c {
            return Err(shape_err("add_bias", self.value(x), self.value(b)));
        }
        let bv = self.value(b).values();
        let mut out = self.value(x).clone();
        for row in out.values_mut().chunks_mut(c) {
            row.iter_mut().zip(bv).for_each(|(o, b)| *o += b);
        }
        Ok(self.push(out, Op::AddBias(x, b)))
    }

    fn zip_with(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, NnError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(name, ta, tb));
        }
        let vals = ta.values().iter().zip(tb.values()).map(|(x, y)| f(*x, *y)).collect();
        let out = Tensor::new(ta.shape().to_vec(), vals)?;
        Ok(self.push(out, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.zip_with(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.zip_with(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.zip_with(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(x);
        let vals = t.values().iter().map(|v| f(*v)).collect();
        let out = Tensor::new(t.shape().to_vec(), vals).expect("same length");
        self.push(out, op)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        self.map(x, |v| v * s, Op::Scale(x, s))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        self.map(x, |v| if v > 0.0 { v } else { slope * v }, Op::LeakyRelu(x, slope))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.map(x, f64::exp, Op::Exp(x))
    }

    /// Rows of `x` selected (with repetition) by `idx`.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var, NnError> {
        let t = self.value(x);
        let (r, c) = (t.rows(), t.cols());
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            if i >= r {
                return Err(NnError::IndexOutOfRange {
                    op: "gather_rows",
                    index: i,
                    len: r,
                });
            }
            out.extend_from_slice(t.row(i));
        }
        Ok(self.push(Tensor::matrix(idx.len(), c, out)?, Op::Gather(x, idx.to_vec())))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let first = *parts.first().ok_or(NnError::Empty("concat_cols"))?;
        let rows = self.value(first).rows();
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(shape_err("concat_cols", self.value(first), self.value(p)));
            }
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        Ok(self.push(Tensor::matrix(rows, total, out)?, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let first = *parts.first().ok_or(NnError::Empty("concat_rows"))?;
        let cols = self.value(first).cols();
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != cols {
                return Err(shape_err("concat_rows", self.value(first), t));
            }
            rows += t.rows();
            out.extend_from_slice(t.values());
        }
        Ok(self.push(Tensor::matrix(rows, cols, out)?, Op::ConcatRows(parts.to_vec())))
    }

    /// Row `s` of the output is the sum of rows of `x` with `seg[row] == s`.
    /// Segments without members produce zero rows.
    pub fn segment_sum(&mut self, x: Var, seg: &[usize], n: usize) -> Result<Var, NnError> {
        let (r, c) = self.dims(x);
        check_segments("segment_sum", r, seg, n)?;
        let t = self.value(x);
        let mut out = vec![0.0; n * c];
        for (i, &s) in seg.iter().enumerate() {
            out[s * c..(s + 1) * c]
                .iter_mut()
                .zip(t.row(i))
                .for_each(|(o, v)| *o += v);
        }
        Ok(self.push(Tensor::matrix(n, c, out)?, Op::SegmentSum(x, seg.to_vec())))
    }

    /// Every segment must have at least one member.
    pub fn segment_mean(&mut self, x: Var, seg: &[usize], n: usize) -> Result<Var, NnError> {
        let (r, c) = self.dims(x);
        check_segments("segment_mean", r, seg, n)?;
        let mut counts = vec![0.0; n];
        seg.iter().for_each(|&s| counts[s] += 1.0);
        if counts.contains(&0.0) {
            return Err(NnError::Empty("segment_mean"));
        }
        let t = self.value(x);
        let mut out = vec![0.0; n * c];
        for (i, &s) in seg.iter().enumerate() {
            out[s * c..(s + 1) * c]
                .iter_mut()
                .zip(t.row(i))
                .for_each(|(o, v)| *o += v);
        }
        for (s, row) in out.chunks_mut(c.max(1)).enumerate().take(n) {
            row.iter_mut().for_each(|o| *o /= counts[s]);
        }
        Ok(self.push(Tensor::matrix(n, c, out)?, Op::SegmentMean(x, seg.to_vec(), counts)))
    }

    /// Element-wise max per segment; ties resolve to the first row. Every
    /// segment must have at least one member.
    pub fn segment_max(&mut self, x: Var, seg: &[usize], n: usize) -> Result<Var, NnError> {
        let (r, c) = self.dims(x);
        check_segments("segment_max", r, seg, n)?;
        let t = self.value(x);
        let mut out = vec![f64::NEG_INFINITY; n * c];
        let mut src = vec![usize::MAX; n * c];
        for (i, &s) in seg.iter().enumerate() {
            for (j, &v) in t.row(i).iter().enumerate() {
                let k = s * c + j;
                if src[k] == usize::MAX || v > out[k] {
                    out[k] = v;
                    src[k] = i;
                }
            }
        }
        if c > 0 && src.contains(&usize::MAX) {
            return Err(NnError::Empty("segment_max"));
        }
        Ok(self.push(Tensor::matrix(n, c, out)?, Op::SegmentMax(x, src)))
    }

    /// Softmax over the rows of each segment, independently per column.
    pub fn segment_softmax(&mut self, x: Var, seg: &[usize], n: usize) -> Result<Var, NnError> {
        let (r, c) = self.dims(x);
        check_segments("segment_softmax", r, seg, n)?;
        let t = self.value(x);
        let mut max = vec![f64::NEG_INFINITY; n * c];
        for (i, &s) in seg.iter().enumerate() {
            for (j, &v) in t.row(i).iter().enumerate() {
                max[s * c + j] = max[s * c + j].max(v);
            }
        }
        let mut out = vec![0.0; r * c];
        let mut denom = vec![0.0; n * c];
        for (i, &s) in seg.iter().enumerate() {
            for (j, &v) in t.row(i).iter().enumerate() {
                let e = (v - max[s * c + j]).exp();
                out[i * c + j] = e;
                denom[s * c + j] += e;
            }
        }
        for (i, &s) in seg.iter().enumerate() {
            for j in 0..c {
                out[i * c + j] /= denom[s * c + j];
            }
        }
        Ok(self.push(Tensor::matrix(r, c, out)?, Op::SegmentSoftmax(x, seg.to_vec())))
    }

    /// Multiplies row `i` of `x` by the scalar `w[i]` (`w` is `[rows, 1]`).
    pub fn scale_rows(&mut self, x: Var, w: Var) -> Result<Var, NnError> {
        let (r, c) = self.dims(x);
        if self.value(w).len() != r {
            return Err(shape_err("scale_rows", self.value(x), self.value(w)));
        }
        let wv = self.value(w).values().to_vec();
        let mut out = self.value(x).clone();
        for (row, w) in out.values_mut().chunks_mut(c.max(1)).zip(&wv) {
            row.iter_mut().for_each(|v| *v *= w);
        }
        Ok(self.push(out, Op::ScaleRows(x, w)))
    }

    /// Element-wise product with a constant mask (used by dropout).
    pub fn mask(&mut self, x: Var, mask: Vec<f64>) -> Result<Var, NnError> {
        let t = self.value(x);
        if mask.len() != t.len() {
            return Err(NnError::ShapeMismatch {
                op: "mask",
                left: t.shape().to_vec(),
                right: vec![mask.len()],
            });
        }
        let vals = t.values().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let out = Tensor::new(t.shape().to_vec(), vals)?;
        Ok(self.push(out, Op::Mask(x, mask)))
    }

    /// Mean Gaussian negative log-likelihood of `y` under `N(mu, exp(log_var))`.
    pub fn gaussian_nll(&mut self, mu: Var, log_var: Var, y: &[f64]) -> Result<Var, NnError> {
        let (tm, tl) = (self.value(mu), self.value(log_var));
        if tm.len() != tl.len() || tm.len() != y.len() {
            return Err(NnError::ShapeMismatch {
                op: "gaussian_nll",
                left: vec![tm.len(), tl.len()],
                right: vec![y.len()],
            });
        }
        if y.is_empty() {
            return Err(NnError::Empty("gaussian_nll"));
        }
        let v = gaussian_nll(tm.values(), tl.values(), y);
        Ok(self.push(Tensor::scalar(v), Op::GaussianNll(mu, log_var, y.to_vec())))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let v = t.values().iter().sum::<f64>() / t.len().max(1) as f64;
        self.push(Tensor::scalar(v), Op::Mean(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let v = self.value(x).values().iter().sum();
        self.push(Tensor::scalar(v), Op::Sum(x))
    }

    /// Reverse pass from the scalar `loss`. Parameter gradients are added to
    /// the slots in `store` (they accumulate across calls until
    /// [`ParamStore::zero_grad`]); all node gradients are returned.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<Gradients, NnError> {
        let lt = self.value(loss);
        if !lt.shape().is_empty() {
            return Err(NnError::NotScalar(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop(i, &g, &mut grads, store);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backprop(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>], store: &mut ParamStore) {
        fn slot(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
            grads[v.0].get_or_insert_with(|| vec![0.0; len])
        }
        let node = &self.nodes[i];
        let len_of = |v: Var| self.value(v).len();
        match &node.op {
            Op::Input => {}
            Op::Param(id) => {
                let p = store.get_mut(*id);
                p.grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
            }
            Op::MatMul(a, b) => {
                let ((m, k), (_, n)) = (self.dims(*a), self.dims(*b));
                let av = self.value(*a).values();
                let bv = self.value(*b).values();
                // dA = G · Bᵀ, dB = Aᵀ · G
                gemm(m, n, k, g, false, bv, true, slot(grads, *a, m * k), true);
                gemm(k, m, n, av, true, g, false, slot(grads, *b, k * n), true);
            }
            Op::AddBias(x, b) => {
                let c = self.value(*x).cols();
                slot(grads, *x, g.len()).iter_mut().zip(g).for_each(|(a, v)| *a += v);
                let gb = slot(grads, *b, c);
                for row in g.chunks(c.max(1)) {
                    gb.iter_mut().zip(row).for_each(|(a, v)| *a += v);
                }
            }
            Op::Add(a, b) => {
                slot(grads, *a, g.len()).iter_mut().zip(g).for_each(|(s, v)| *s += v);
                slot(grads, *b, g.len()).iter_mut().zip(g).for_each(|(s, v)| *s += v);
            }
            Op::Sub(a, b) => {
                slot(grads, *a, g.len()).iter_mut().zip(g).for_each(|(s, v)| *s += v);
                slot(grads, *b, g.len()).iter_mut().zip(g).for_each(|(s, v)| *s -= v);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).values(), self.value(*b).values());
                let ga = slot(grads, *a, g.len());
                for k in 0..g.len() {
                    ga[k] += g[k] * bv[k];
                }
                let gb = slot(grads, *b, g.len());
                for k in 0..g.len() {
                    gb[k] += g[k] * av[k];
                }
            }
            Op::Scale(x, s) => {
                slot(grads, *x, g.len())
                    .iter_mut()
                    .zip(g)
                    .for_each(|(a, v)| *a += v * s);
            }
            Op::Relu(x) => {
                let xv = self.value(*x).values();
                let gx = slot(grads, *x, g.len());
                for k in 0..g.len() {
                    if xv[k] > 0.0 {
                        gx[k] += g[k];
                    }
                }
            }
            Op::LeakyRelu(x, slope) => {
                let xv = self.value(*x).values();
                let gx = slot(grads, *x, g.len());
                for k in 0..g.len() {
                    gx[k] += if xv[k] > 0.0 { g[k] } else { slope * g[k] };
                }
            }
            Op::Sigmoid(x) => {
                let y = node.value.values();
                let gx = slot(grads, *x, g.len());
                for k in 0..g.len() {
                    gx[k] += g[k] * y[k] * (1.0 - y[k]);
                }
            }
            Op::Exp(x) => {
                let y = node.value.values();
                let gx = slot(grads, *x, g.len());
                for k in 0..g.len() {
                    gx[k] += g[k] * y[k];
                }
            }
            Op::Gather(x, idx) => {
                let c = self.value(*x).cols();
                let gx = slot(grads, *x, len_of(*x));
                for (r, &src) in idx.iter().enumerate() {
                    gx[src * c..(src + 1) * c]
                        .iter_mut()
                        .zip(&g[r * c..(r + 1) * c])
                        .for_each(|(a, v)| *a += v);
                }
            }
            Op::ConcatCols(parts) => {
                let rows = node.value.rows();
                let total = node.value.cols();
                let mut off = 0;
                for &p in parts {
                    let c = self.value(p).cols();
                    let gp = slot(grads, p, rows * c);
                    for r in 0..rows {
                        gp[r * c..(r + 1) * c]
                            .iter_mut()
                            .zip(&g[r * total + off..r * total + off + c])
                            .for_each(|(a, v)| *a += v);
                    }
                    off += c;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = len_of(p);
                    slot(grads, p, n)
                        .iter_mut()
                        .zip(&g[off..off + n])
                        .for_each(|(a, v)| *a += v);
                    off += n;
                }
            }
            Op::SegmentSum(x, seg) => {
                let c = self.value(*x).cols();
                let gx = slot(grads, *x, len_of(*x));
                for (r, &s) in seg.iter().enumerate() {
                    gx[r * c..(r + 1) * c]
                        .iter_mut()
                        .zip(&g[s * c..(s + 1) * c])
                        .for_each(|(a, v)| *a += v);
                }
            }
            Op::SegmentMean(x, seg, counts) => {
                let c = self.value(*x).cols();
                let gx = slot(grads, *x, len_of(*x));
                for (r, &s) in seg.iter().enumerate() {
                    gx[r * c..(r + 1) * c]
                        .iter_mut()
                        .zip(&g[s * c..(s + 1) * c])
                        .for_each(|(a, v)| *a += v / counts[s]);
                }
            }
            Op::SegmentMax(x, src) => {
                let c = self.value(*x).cols();
                let gx = slot(grads, *x, len_of(*x));
                for (k, &r) in src.iter().enumerate() {
                    gx[r * c + k % c] += g[k];
                }
            }
            Op::SegmentSoftmax(x, seg) => {
                let c = self.value(*x).cols();
                let y = node.value.values();
                let n_seg = seg.iter().max().map_or(0, |m| m + 1);
                let mut dot = vec![0.0; n_seg * c];
                for (r, &s) in seg.iter().enumerate() {
                    for j in 0..c {
                        dot[s * c + j] += y[r * c + j] * g[r * c + j];
                    }
                }
                let gx = slot(grads, *x, len_of(*x));
                for (r, &s) in seg.iter().enumerate() {
                    for j in 0..c {
                        let k = r * c + j;
                        gx[k] += y[k] * (g[k] - dot[s * c + j]);
                    }
                }
            }
            Op::ScaleRows(x, w) => {
                let c = self.value(*x).cols();
                let xv = self.value(*x).values();
                let wv = self.value(*w).values();
                let gw = slot(grads, *w, wv.len());
                for (r, gw) in gw.iter_mut().enumerate() {
                    *gw += (0..c).map(|j| g[r * c + j] * xv[r * c + j]).sum::<f64>();
                }
                let gx = slot(grads, *x, xv.len());
                for (r, w) in wv.iter().enumerate() {
                    for j in 0..c {
                        gx[r * c + j] += g[r * c + j] * w;
                    }
                }
            }
            Op::Mask(x, mask) => {
                let gx = slot(grads, *x, g.len());
                for k in 0..g.len() {
                    gx[k] += g[k] * mask[k];
                }
            }
            Op::GaussianNll(mu, lv, y) => {
                let n = y.len() as f64;
                let (mv, lvv) = (self.value(*mu).values(), self.value(*lv).values());
                let gm = slot(grads, *mu, y.len());
                for k in 0..y.len() {
                    gm[k] += -g[0] * (y[k] - mv[k]) * (-lvv[k]).exp() / n;
                }
                let gl = slot(grads, *lv, y.len());
                for k in 0..y.len() {
                    let r = y[k] - mv[k];
                    gl[k] += g[0] * (0.5 - 0.5 * r * r * (-lvv[k]).exp()) / n;
                }
            }
            Op::Mean(x) => {
                let n = len_of(*x);
                let d = g[0] / n.max(1) as f64;
                slot(grads, *x, n).iter_mut().for_each(|a| *a += d);
            }
            Op::Sum(x) => {
                let n = len_of(*x);
                slot(grads, *x, n).iter_mut().for_each(|a| *a += g[0]);
            }
        }
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// `(1/n) Σ [lv/2 + (y−μ)² e^{−lv}/2 + ½ ln 2π]`.
pub fn gaussian_nll(mu: &[f64], log_var: &[f64], y: &[f64]) -> f64 {
    let n = y.len() as f64;
    mu.iter()
        .zip(log_var)
        .zip(y)
        .map(|((m, lv), y)| 0.5 * lv + 0.5 * (y - m).powi(2) * (-lv).exp() + HALF_LN_2PI)
        .sum::<f64>()
        / n
}
