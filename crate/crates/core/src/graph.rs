//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Graph`] is an eager tape: every operation computes its value
//! immediately and records enough information to propagate gradients
//! backwards later. Tensors are either vectors (`rows x 1`) or row-major
//! matrices. Parameters enter the tape through [`Graph::param`], and
//! [`Graph::backward`] returns their gradients as a [`Grads`] table.

use crate::params::{Grads, ParamId, ParamStore};
use std::collections::HashMap;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatVec(Var, Var),
    MatMulT(Var, Var),
    WeightedRows(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRowBroadcast(Var, Var),
    Affine(Var, f64),
    ScaleBy(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Log(Var, f64),
    Softmax(Var),
    Normalize(Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    StackRows(Vec<Var>),
    MeanRows(Var),
    Sum(Var),
    Dot(Var, Var),
    Pick(Var, usize),
    GatherRows(Var, Vec<usize>),
    SegmentMax(Var, Vec<usize>),
    Scatter(Var, Vec<usize>),
    Pad(Var),
    RowL2Normalize(Var),
    Lstm {
        w: Var,
        b: Var,
        x: Var,
        h: Var,
        c: Var,
        gates: Vec<f64>,
    },
    ConvMaxRelu {
        kernels: Var,
        x: Var,
        width: usize,
        argmax: Vec<Option<usize>>,
    },
}

#[derive(Debug)]
struct Node {
    value: Vec<f64>,
    rows: usize,
    cols: usize,
    op: Op,
}

/// Eager autodiff tape.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in v.iter_mut() {
        *x /= total;
    }
}

// Four independent partial sums so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[2]) + (acc[1] + acc[3]) + tail
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<f64>, rows: usize, cols: usize, op: Op) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node {
            value,
            rows,
            cols,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    /// Value of a one-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        let n = self.node(v);
        assert_eq!(n.value.len(), 1, "scalar() on a node of size {}", n.value.len());
        n.value[0]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = self.node(v);
        (n.rows, n.cols)
    }

    pub fn size(&self, v: Var) -> usize {
        self.node(v).value.len()
    }

    pub fn constant(&mut self, value: Vec<f64>, rows: usize, cols: usize) -> Var {
        assert_eq!(value.len(), rows * cols, "constant shape mismatch");
        self.push(value, rows, cols, Op::Leaf)
    }

    pub fn vector(&mut self, value: Vec<f64>) -> Var {
        let n = value.len();
        self.push(value, n, 1, Op::Leaf)
    }

    pub fn zeros(&mut self, n: usize) -> Var {
        self.vector(vec![0.0; n])
    }

    /// Copy of `v` with no gradient path back to it.
    pub fn detach(&mut self, v: Var) -> Var {
        let n = self.node(v);
        let (value, rows, cols) = (n.value.clone(), n.rows, n.cols);
        self.push(value, rows, cols, Op::Leaf)
    }

    /// Brings a parameter block onto the tape. Repeated calls for the same
    /// block return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let block = store.block(id);
        let v = self.push(block.data.clone(), block.rows, block.cols, Op::Param(id));
        self.params.insert(id, v);
        v
    }

    /// `W x` for `W: r x c`, `x: c`.
    pub fn matvec(&mut self, w: Var, x: Var) -> Var {
        let (r, c) = self.shape(w);
        assert_eq!(self.size(x), c, "matvec: matrix is {r}x{c}, vector has {}", self.size(x));
        let wv = self.value(w);
        let xv = self.value(x);
        let out: Vec<f64> = (0..r).map(|i| dot(&wv[i * c..(i + 1) * c], xv)).collect();
        self.push(out, r, 1, Op::MatVec(w, x))
    }

    /// `X W^T` for `X: n x c`, `W: r x c`.
    pub fn matmul_t(&mut self, x: Var, w: Var) -> Var {
        let (n, c) = self.shape(x);
        let (r, c2) = self.shape(w);
        assert_eq!(c, c2, "matmul_t: inner dimensions {c} vs {c2}");
        let xv = self.value(x);
        let wv = self.value(w);
        let mut out = vec![0.0; n * r];
        for a in 0..n {
            let xa = &xv[a * c..(a + 1) * c];
            for b in 0..r {
                out[a * r + b] = dot(xa, &wv[b * c..(b + 1) * c]);
            }
        }
        self.push(out, n, r, Op::MatMulT(x, w))
    }

    /// `sum_i a_i M_i` over the rows of `M: n x d`.
    pub fn weighted_rows(&mut self, m: Var, a: Var) -> Var {
        let (n, d) = self.shape(m);
        assert_eq!(self.size(a), n, "weighted_rows: {n} rows, {} weights", self.size(a));
        let mv = self.value(m);
        let av = self.value(a);
        let mut out = vec![0.0; d];
        for i in 0..n {
            axpy(av[i], &mv[i * d..(i + 1) * d], &mut out);
        }
        self.push(out, d, 1, Op::WeightedRows(m, a))
    }

    fn elementwise(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        assert_eq!(self.size(a), self.size(b), "elementwise size mismatch");
        let (rows, cols) = self.shape(a);
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| f(*x, *y))
            .collect();
        self.push(out, rows, cols, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.elementwise(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.elementwise(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.elementwise(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds vector `v: d` to every row of `m: n x d`.
    pub fn add_row_broadcast(&mut self, m: Var, v: Var) -> Var {
        let (n, d) = self.shape(m);
        assert_eq!(self.size(v), d, "add_row_broadcast: width {d} vs {}", self.size(v));
        let vv = self.value(v).to_vec();
        let mut out = self.value(m).to_vec();
        for row in out.chunks_mut(d.max(1)) {
            for (o, x) in row.iter_mut().zip(&vv) {
                *o += x;
            }
        }
        self.push(out, n, d, Op::AddRowBroadcast(m, v))
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let (rows, cols) = self.shape(x);
        let out = self.value(x).iter().map(|v| scale * v + shift).collect();
        self.push(out, rows, cols, Op::Affine(x, scale))
    }

    pub fn scale(&mut self, x: Var, scale: f64) -> Var {
        self.affine(x, scale, 0.0)
    }

    /// `1 - x`.
    pub fn one_minus(&mut self, x: Var) -> Var {
        self.affine(x, -1.0, 1.0)
    }

    /// Multiplies `x` by the one-element node `s`.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Var {
        let sv = self.scalar(s);
        let (rows, cols) = self.shape(x);
        let out = self.value(x).iter().map(|v| v * sv).collect();
        self.push(out, rows, cols, Op::ScaleBy(x, s))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let (rows, cols) = self.shape(x);
        let out = self.value(x).iter().map(|v| f(*v)).collect();
        self.push(out, rows, cols, op)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    /// Natural log with the argument floored at `floor`; no gradient flows
    /// through floored entries.
    pub fn log(&mut self, x: Var, floor: f64) -> Var {
        self.unary(x, |v| v.max(floor).ln(), Op::Log(x, floor))
    }

    pub fn softmax(&mut self, x: Var) -> Var {
        let mut out = self.value(x).to_vec();
        softmax_in_place(&mut out);
        let n = out.len();
        self.push(out, n, 1, Op::Softmax(x))
    }

    /// `x / sum(x)`.
    pub fn normalize(&mut self, x: Var) -> Var {
        let total: f64 = self.value(x).iter().sum();
        let out: Vec<f64> = self.value(x).iter().map(|v| v / total).collect();
        let n = out.len();
        self.push(out, n, 1, Op::Normalize(x))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut out = Vec::new();
        for &p in parts {
            out.extend_from_slice(self.value(p));
        }
        let n = out.len();
        self.push(out, n, 1, Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Var {
        assert!(start + len <= self.size(x), "slice out of range");
        let out = self.value(x)[start..start + len].to_vec();
        self.push(out, len, 1, Op::Slice(x, start))
    }

    /// Stacks equally sized vectors into an `n x d` matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Var {
        assert!(!rows.is_empty(), "stack_rows needs at least one row");
        let d = self.size(rows[0]);
        let mut out = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            assert_eq!(self.size(r), d, "stack_rows: ragged rows");
            out.extend_from_slice(self.value(r));
        }
        self.push(out, rows.len(), d, Op::StackRows(rows.to_vec()))
    }

    /// Average of the rows of `m: n x d`.
    pub fn mean_rows(&mut self, m: Var) -> Var {
        let (n, d) = self.shape(m);
        assert!(n > 0, "mean_rows of an empty matrix");
        let mv = self.value(m);
        let mut out = vec![0.0; d];
        for row in mv.chunks(d) {
            axpy(1.0 / n as f64, row, &mut out);
        }
        self.push(out, d, 1, Op::MeanRows(m))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        self.push(vec![s], 1, 1, Op::Sum(x))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.size(a), self.size(b), "dot size mismatch");
        let s = dot(self.value(a), self.value(b));
        self.push(vec![s], 1, 1, Op::Dot(a, b))
    }

    pub fn pick(&mut self, x: Var, index: usize) -> Var {
        let v = self.value(x)[index];
        self.push(vec![v], 1, 1, Op::Pick(x, index))
    }

    /// Rows `ids` of `table`, as an `ids.len() x d` matrix.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Var {
        let (r, d) = self.shape(table);
        let tv = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            assert!(id < r, "gather_rows: id {id} out of {r} rows");
            out.extend_from_slice(&tv[id * d..(id + 1) * d]);
        }
        self.push(out, ids.len(), d, Op::GatherRows(table, ids.to_vec()))
    }

    /// Row `i` of a matrix as a vector.
    pub fn row(&mut self, m: Var, i: usize) -> Var {
        let (_, d) = self.shape(m);
        self.slice(m, i * d, d)
    }

    /// For `m: n x c` and consecutive column segments of the given lengths,
    /// returns the `n x segments` matrix of per-segment row maxima.
    pub fn segment_max(&mut self, m: Var, segment_lens: &[usize]) -> Var {
        let (n, c) = self.shape(m);
        assert_eq!(segment_lens.iter().sum::<usize>(), c, "segments must cover all columns");
        assert!(segment_lens.iter().all(|&l| l > 0), "empty segment");
        let s = segment_lens.len();
        let mv = self.value(m);
        let mut out = vec![0.0; n * s];
        let mut argmax = vec![0usize; n * s];
        for i in 0..n {
            let mut start = 0;
            for (j, &len) in segment_lens.iter().enumerate() {
                let mut best = start;
                for col in start..start + len {
                    if mv[i * c + col] > mv[i * c + best] {
                        best = col;
                    }
                }
                out[i * s + j] = mv[i * c + best];
                argmax[i * s + j] = best;
                start += len;
            }
        }
        self.push(out, n, s, Op::SegmentMax(m, argmax))
    }

    /// `y[targets[i]] += x[i]` into a zero vector of length `len`.
    pub fn scatter(&mut self, x: Var, targets: &[usize], len: usize) -> Var {
        assert_eq!(self.size(x), targets.len(), "scatter: one target per entry");
        let mut out = vec![0.0; len];
        for (v, &t) in self.value(x).iter().zip(targets) {
            out[t] += v;
        }
        self.push(out, len, 1, Op::Scatter(x, targets.to_vec()))
    }

    /// Zero-pads a vector to length `len`.
    pub fn pad(&mut self, x: Var, len: usize) -> Var {
        assert!(len >= self.size(x));
        let mut out = self.value(x).to_vec();
        out.resize(len, 0.0);
        self.push(out, len, 1, Op::Pad(x))
    }

    /// Scales every row of a matrix to unit L2 norm.
    pub fn row_l2_normalize(&mut self, m: Var) -> Var {
        let (n, d) = self.shape(m);
        let mut out = self.value(m).to_vec();
        for row in out.chunks_mut(d.max(1)) {
            let norm = dot(row, row).sqrt().max(1e-12);
            row.iter_mut().for_each(|v| *v /= norm);
        }
        self.push(out, n, d, Op::RowL2Normalize(m))
    }

    /// Fused LSTM cell. `w: 4H x (I + H)` acting on `[x; h]`, gate order
    /// input, forget, output, candidate. Returns `[h'; c']`.
    pub fn lstm(&mut self, w: Var, b: Var, x: Var, h: Var, c: Var) -> Var {
        let hidden = self.size(h);
        let input = self.size(x);
        assert_eq!(self.shape(w), (4 * hidden, input + hidden), "lstm weight shape");
        assert_eq!(self.size(b), 4 * hidden, "lstm bias shape");
        assert_eq!(self.size(c), hidden, "lstm cell shape");
        let cols = input + hidden;
        let mut xh = Vec::with_capacity(cols);
        xh.extend_from_slice(self.value(x));
        xh.extend_from_slice(self.value(h));
        let wv = self.value(w);
        let bv = self.value(b);
        let mut gates: Vec<f64> = (0..4 * hidden)
            .map(|r| bv[r] + dot(&wv[r * cols..(r + 1) * cols], &xh))
            .collect();
        for (r, g) in gates.iter_mut().enumerate() {
            *g = if r < 3 * hidden { sigmoid(*g) } else { g.tanh() };
        }
        let cv = self.value(c);
        let mut out = vec![0.0; 2 * hidden];
        for j in 0..hidden {
            let (i, f, o, g) = (
                gates[j],
                gates[hidden + j],
                gates[2 * hidden + j],
                gates[3 * hidden + j],
            );
            let cn = f * cv[j] + i * g;
            out[hidden + j] = cn;
            out[j] = o * cn.tanh();
        }
        self.push(
            out,
            2 * hidden,
            1,
            Op::Lstm {
                w,
                b,
                x,
                h,
                c,
                gates,
            },
        )
    }

    /// Bias-free valid 1-D convolution of each kernel row along `x`,
    /// followed by ReLU and a global max-pool per kernel.
    pub fn conv_max_relu(&mut self, kernels: Var, x: Var) -> Var {
        let (nf, width) = self.shape(kernels);
        let d = self.size(x);
        assert!(width >= 1 && width <= d, "kernel width {width} for input of {d}");
        let kv = self.value(kernels);
        let xv = self.value(x);
        let mut out = vec![0.0; nf];
        let mut argmax = vec![None; nf];
        for f in 0..nf {
            let k = &kv[f * width..(f + 1) * width];
            let mut best = f64::NEG_INFINITY;
            let mut best_p = 0;
            for p in 0..=d - width {
                let a = dot(k, &xv[p..p + width]);
                if a > best {
                    best = a;
                    best_p = p;
                }
            }
            if best > 0.0 {
                out[f] = best;
                argmax[f] = Some(best_p);
            }
        }
        self.push(
            out,
            nf,
            1,
            Op::ConvMaxRelu {
                kernels,
                x,
                width,
                argmax,
            },
        )
    }

    /// Backpropagates from the one-element node `loss` and returns the
    /// gradient of every parameter that reached the tape.
    pub fn backward(&self, loss: Var, store: &ParamStore) -> Grads {
        assert_eq!(self.size(loss), 1, "backward needs a scalar loss");
        let mut grads = Grads::zeros_like(store);
        let mut g: Vec<Vec<f64>> = vec![Vec::new(); loss.0 + 1];
        g[loss.0] = vec![1.0];

        fn acc(g: &mut [Vec<f64>], v: Var, len: usize) -> &mut [f64] {
            let slot = &mut g[v.0];
            if slot.is_empty() {
                *slot = vec![0.0; len];
            }
            slot
        }

        for idx in (0..=loss.0).rev() {
            let gi = std::mem::take(&mut g[idx]);
            if gi.is_empty() {
                continue;
            }
            let node = &self.nodes[idx];
            let y = &node.value;
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => grads.accumulate(*id, &gi),
                Op::MatVec(w, x) => {
                    let (r, c) = self.shape(*w);
                    let wv = self.value(*w);
                    let xv = self.value(*x);
                    {
                        let dw = acc(&mut g, *w, r * c);
                        for i in 0..r {
                            if gi[i] != 0.0 {
                                axpy(gi[i], xv, &mut dw[i * c..(i + 1) * c]);
                            }
                        }
                    }
                    let dx = acc(&mut g, *x, c);
                    for i in 0..r {
                        if gi[i] != 0.0 {
                            axpy(gi[i], &wv[i * c..(i + 1) * c], dx);
                        }
                    }
                }
                Op::MatMulT(x, w) => {
                    let (n, c) = self.shape(*x);
                    let (r, _) = self.shape(*w);
                    let xv = self.value(*x);
                    let wv = self.value(*w);
                    {
                        let dx = acc(&mut g, *x, n * c);
                        for a in 0..n {
                            for b in 0..r {
                                let gab = gi[a * r + b];
                                if gab != 0.0 {
                                    axpy(gab, &wv[b * c..(b + 1) * c], &mut dx[a * c..(a + 1) * c]);
                                }
                            }
                        }
                    }
                    let dw = acc(&mut g, *w, r * c);
                    for a in 0..n {
                        for b in 0..r {
                            let gab = gi[a * r + b];
                            if gab != 0.0 {
                                axpy(gab, &xv[a * c..(a + 1) * c], &mut dw[b * c..(b + 1) * c]);
                            }
                        }
                    }
                }
                Op::WeightedRows(m, a) => {
                    let (n, d) = self.shape(*m);
                    let mv = self.value(*m);
                    let av = self.value(*a);
                    {
                        let dm = acc(&mut g, *m, n * d);
                        for i in 0..n {
                            axpy(av[i], &gi, &mut dm[i * d..(i + 1) * d]);
                        }
                    }
                    let da = acc(&mut g, *a, n);
                    for i in 0..n {
                        da[i] += dot(&mv[i * d..(i + 1) * d], &gi);
                    }
                }
                Op::Add(a, b) => {
                    axpy(1.0, &gi, acc(&mut g, *a, gi.len()));
                    axpy(1.0, &gi, acc(&mut g, *b, gi.len()));
                }
                Op::Sub(a, b) => {
                    axpy(1.0, &gi, acc(&mut g, *a, gi.len()));
                    axpy(-1.0, &gi, acc(&mut g, *b, gi.len()));
                }
                Op::Mul(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    {
                        let da = acc(&mut g, *a, gi.len());
                        for k in 0..gi.len() {
                            da[k] += gi[k] * bv[k];
                        }
                    }
                    let db = acc(&mut g, *b, gi.len());
                    for k in 0..gi.len() {
                        db[k] += gi[k] * av[k];
                    }
                }
                Op::AddRowBroadcast(m, v) => {
                    let d = self.size(*v);
                    axpy(1.0, &gi, acc(&mut g, *m, gi.len()));
                    let dv = acc(&mut g, *v, d);
                    for row in gi.chunks(d.max(1)) {
                        axpy(1.0, row, dv);
                    }
                }
                Op::Affine(x, scale) => axpy(*scale, &gi, acc(&mut g, *x, gi.len())),
                Op::ScaleBy(x, s) => {
                    let sv = self.scalar(*s);
                    let xv = self.value(*x);
                    axpy(sv, &gi, acc(&mut g, *x, gi.len()));
                    acc(&mut g, *s, 1)[0] += dot(xv, &gi);
                }
                Op::Tanh(x) => {
                    let dx = acc(&mut g, *x, gi.len());
                    for k in 0..gi.len() {
                        dx[k] += gi[k] * (1.0 - y[k] * y[k]);
                    }
                }
                Op::Sigmoid(x) => {
                    let dx = acc(&mut g, *x, gi.len());
                    for k in 0..gi.len() {
                        dx[k] += gi[k] * y[k] * (1.0 - y[k]);
                    }
                }
                Op::Relu(x) => {
                    let xv = self.value(*x);
                    let dx = acc(&mut g, *x, gi.len());
                    for k in 0..gi.len() {
                        if xv[k] > 0.0 {
                            dx[k] += gi[k];
                        }
                    }
                }
                Op::Log(x, floor) => {
                    let xv = self.value(*x);
                    let dx = acc(&mut g, *x, gi.len());
                    for k in 0..gi.len() {
                        if xv[k] > *floor {
                            dx[k] += gi[k] / xv[k];
                        }
                    }
                }
                Op::Softmax(x) => {
                    let gy = dot(&gi, y);
                    let dx = acc(&mut g, *x, gi.len());
                    for k in 0..gi.len() {
                        dx[k] += y[k] * (gi[k] - gy);
                    }
                }
                Op::Normalize(x) => {
                    let xv = self.value(*x);
                    let total: f64 = xv.iter().sum();
                    let gx = dot(&gi, xv);
                    let dx = acc(&mut g, *x, gi.len());
                    for k in 0..gi.len() {
                        dx[k] += gi[k] / total - gx / (total * total);
                    }
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let n = self.size(p);
                        axpy(1.0, &gi[off..off + n], acc(&mut g, p, n));
                        off += n;
                    }
                }
                Op::Slice(x, start) => {
                    let n = self.size(*x);
                    let dx = acc(&mut g, *x, n);
                    axpy(1.0, &gi, &mut dx[*start..*start + gi.len()]);
                }
                Op::StackRows(rows) => {
                    let d = node.cols;
                    for (i, &r) in rows.iter().enumerate() {
                        axpy(1.0, &gi[i * d..(i + 1) * d], acc(&mut g, r, d));
                    }
                }
                Op::MeanRows(m) => {
                    let (n, d) = self.shape(*m);
                    let dm = acc(&mut g, *m, n * d);
                    for row in dm.chunks_mut(d) {
                        axpy(1.0 / n as f64, &gi, row);
                    }
                }
                Op::Sum(x) => {
                    let n = self.size(*x);
                    acc(&mut g, *x, n).iter_mut().for_each(|v| *v += gi[0]);
                }
                Op::Dot(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    axpy(gi[0], bv, acc(&mut g, *a, av.len()));
                    axpy(gi[0], av, acc(&mut g, *b, bv.len()));
                }
                Op::Pick(x, index) => {
                    let n = self.size(*x);
                    acc(&mut g, *x, n)[*index] += gi[0];
                }
                Op::GatherRows(table, ids) => {
                    let (r, d) = self.shape(*table);
                    let dt = acc(&mut g, *table, r * d);
                    for (i, &id) in ids.iter().enumerate() {
                        axpy(1.0, &gi[i * d..(i + 1) * d], &mut dt[id * d..(id + 1) * d]);
                    }
                }
                Op::SegmentMax(m, argmax) => {
                    let (n, c) = self.shape(*m);
                    let s = node.cols;
                    let dm = acc(&mut g, *m, n * c);
                    for i in 0..n {
                        for j in 0..s {
                            dm[i * c + argmax[i * s + j]] += gi[i * s + j];
                        }
                    }
                }
                Op::Scatter(x, targets) => {
                    let dx = acc(&mut g, *x, targets.len());
                    for (k, &t) in targets.iter().enumerate() {
                        dx[k] += gi[t];
                    }
                }
                Op::Pad(x) => {
                    let n = self.size(*x);
                    axpy(1.0, &gi[..n], acc(&mut g, *x, n));
                }
                Op::RowL2Normalize(m) => {
                    let (n, d) = self.shape(*m);
                    let mv = self.value(*m);
                    let dm = acc(&mut g, *m, n * d);
                    for i in 0..n {
                        let row = &mv[i * d..(i + 1) * d];
                        let norm = dot(row, row).sqrt().max(1e-12);
                        let yr = &y[i * d..(i + 1) * d];
                        let gr = &gi[i * d..(i + 1) * d];
                        let proj = dot(yr, gr);
                        for k in 0..d {
                            dm[i * d + k] += (gr[k] - yr[k] * proj) / norm;
                        }
                    }
                }
                Op::Lstm {
                    w,
                    b,
                    x,
                    h,
                    c,
                    gates,
                } => {
                    let hidden = self.size(*h);
                    let input = self.size(*x);
                    let cols = input + hidden;
                    let cv = self.value(*c);
                    let mut dz = vec![0.0; 4 * hidden];
                    let mut dc_prev = vec![0.0; hidden];
                    for j in 0..hidden {
                        let (i, f, o, gg) = (
                            gates[j],
                            gates[hidden + j],
                            gates[2 * hidden + j],
                            gates[3 * hidden + j],
                        );
                        let cn = y[hidden + j];
                        let tc = cn.tanh();
                        let gh = gi[j];
                        let dcn = gi[hidden + j] + gh * o * (1.0 - tc * tc);
                        dz[j] = dcn * gg * i * (1.0 - i);
                        dz[hidden + j] = dcn * cv[j] * f * (1.0 - f);
                        dz[2 * hidden + j] = gh * tc * o * (1.0 - o);
                        dz[3 * hidden + j] = dcn * i * (1.0 - gg * gg);
                        dc_prev[j] = dcn * f;
                    }
                    let mut xh = Vec::with_capacity(cols);
                    xh.extend_from_slice(self.value(*x));
                    xh.extend_from_slice(self.value(*h));
                    let wv = self.value(*w);
                    let mut dxh = vec![0.0; cols];
                    {
                        let dw = acc(&mut g, *w, 4 * hidden * cols);
                        for r in 0..4 * hidden {
                            if dz[r] != 0.0 {
                                axpy(dz[r], &xh, &mut dw[r * cols..(r + 1) * cols]);
                                axpy(dz[r], &wv[r * cols..(r + 1) * cols], &mut dxh);
                            }
                        }
                    }
                    axpy(1.0, &dz, acc(&mut g, *b, 4 * hidden));
                    axpy(1.0, &dxh[..input], acc(&mut g, *x, input));
                    axpy(1.0, &dxh[input..], acc(&mut g, *h, hidden));
                    axpy(1.0, &dc_prev, acc(&mut g, *c, hidden));
                }
                Op::ConvMaxRelu {
                    kernels,
                    x,
                    width,
                    argmax,
                } => {
                    let (nf, _) = self.shape(*kernels);
                    let d = self.size(*x);
                    let kv = self.value(*kernels);
                    let xv = self.value(*x);
                    {
                        let dk = acc(&mut g, *kernels, nf * width);
                        for f in 0..nf {
                            if let Some(p) = argmax[f] {
                                axpy(gi[f], &xv[p..p + width], &mut dk[f * width..(f + 1) * width]);
                            }
                        }
                    }
                    let dx = acc(&mut g, *x, d);
                    for f in 0..nf {
                        if let Some(p) = argmax[f] {
                            axpy(gi[f], &kv[f * width..(f + 1) * width], &mut dx[p..p + width]);
                        }
                    }
                }
            }
        }
        grads
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamGroup;

    /// Central-difference check of every parameter coordinate.
    fn check(store: &mut ParamStore, build: impl Fn(&mut Graph, &ParamStore) -> Var) {
        let mut g = Graph::new();
        let loss = build(&mut g, store);
        let grads = g.backward(loss, store);
        let step = 1e-6;
        for id in store.ids().collect::<Vec<_>>() {
            for k in 0..store.block(id).data.len() {
                let orig = store.block(id).data[k];
                store.block_mut(id).data[k] = orig + step;
                let mut gp = Graph::new();
                let lp = build(&mut gp, store);
                let plus = gp.scalar(lp);
                store.block_mut(id).data[k] = orig - step;
                let mut gm = Graph::new();
                let lm = build(&mut gm, store);
                let minus = gm.scalar(lm);
                store.block_mut(id).data[k] = orig;
                let numeric = (plus - minus) / (2.0 * step);
                let analytic = grads.block(id).map(|b| b[k]).unwrap_or(0.0);
                let denom = numeric.abs().max(analytic.abs()).max(1e-6);
                assert!(
                    (numeric - analytic).abs() / denom < 1e-5,
                    "{} [{k}]: analytic {analytic} numeric {numeric}",
                    store.block(id).name
                );
            }
        }
    }

    fn store_with(blocks: &[(&str, usize, usize, &[f64])]) -> ParamStore {
        let mut s = ParamStore::new();
        for (name, r, c, data) in blocks {
            s.insert(name, *r, *c, ParamGroup::Generator, data.to_vec()).unwrap();
        }
        s
    }

    #[test]
    fn matvec_softmax_log_gradients() {
        let mut s = store_with(&[
            ("w", 3, 2, &[0.3, -0.2, 0.5, 0.1, -0.4, 0.7]),
            ("x", 2, 1, &[0.9, -1.1]),
        ]);
        check(&mut s, |g, s| {
            let w = g.param(s, s.id("w").unwrap());
            let x = g.param(s, s.id("x").unwrap());
            let y = g.matvec(w, x);
            let p = g.softmax(y);
            let pk = g.pick(p, 1);
            g.log(pk, 1e-12)
        });
    }

    #[test]
    fn lstm_and_conv_gradients() {
        let w: Vec<f64> = (0..4 * 2 * 5).map(|i| ((i * 37 % 11) as f64 - 5.0) / 10.0).collect();
        let mut s = store_with(&[
            ("w", 8, 5, &w),
            ("b", 8, 1, &[0.1, -0.1, 0.2, 0.0, 0.05, -0.3, 0.2, 0.1]),
            ("x", 3, 1, &[0.5, -0.4, 0.8]),
            ("h", 2, 1, &[0.1, -0.2]),
            ("c", 2, 1, &[0.3, 0.4]),
            ("k", 2, 2, &[0.7, -0.3, 0.2, 0.9]),
        ]);
        check(&mut s, |g, s| {
            let [w, b, x, h, c, k] =
                ["w", "b", "x", "h", "c", "k"].map(|n| g.param(s, s.id(n).unwrap()));
            let out = g.lstm(w, b, x, h, c);
            let f = g.conv_max_relu(k, out);
            let t = g.tanh(f);
            g.sum(t)
        });
    }

    #[test]
    fn structural_op_gradients() {
        let mut s = store_with(&[
            ("m", 3, 2, &[0.3, -0.2, 0.5, 0.1, -0.4, 0.7]),
            ("e", 4, 2, &[0.2, 0.1, -0.3, 0.6, 0.8, -0.5, 0.05, 0.4]),
            ("a", 3, 1, &[0.2, 0.5, 0.3]),
        ]);
        check(&mut s, |g, s| {
            let m = g.param(s, s.id("m").unwrap());
            let e = g.param(s, s.id("e").unwrap());
            let a = g.param(s, s.id("a").unwrap());
            let en = g.row_l2_normalize(e);
            let gamma = g.matmul_t(m, en);
            let delta = g.segment_max(gamma, &[1, 3]);
            let r = g.row(delta, 1);
            let mean = g.mean_rows(m);
            let v = g.add(r, mean);
            let wr = g.weighted_rows(m, a);
            let bc = g.add_row_broadcast(m, wr);
            let sg = g.sigmoid(bc);
            let ms = g.mean_rows(sg);
            let prod = g.mul(v, ms);
            let pn = g.sigmoid(prod);
            let nz = g.normalize(pn);
            let sc = g.scatter(nz, &[2, 0], 4);
            let pd = g.pad(a, 4);
            let s0 = g.pick(a, 0);
            let mix = g.scale_by(pd, s0);
            let tot = g.sub(sc, mix);
            let d = g.dot(tot, tot);
            let c = g.concat(&[d, s0]);
            let r2 = g.relu(c);
            g.sum(r2)
        });
    }

    #[test]
    fn detach_blocks_gradient() {
        let s = store_with(&[("x", 2, 1, &[1.0, 2.0])]);
        let mut g = Graph::new();
        let x = g.param(&s, s.id("x").unwrap());
        let d = g.detach(x);
        let l = g.dot(d, d);
        let grads = g.backward(l, &s);
        assert!(grads.block(s.id("x").unwrap()).is_none());
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut g = Graph::new();
        let z = g.zeros(4);
        let p = g.softmax(z);
        assert!(g.value(p).iter().all(|v| (v - 0.25).abs() < 1e-15));
    }
}
