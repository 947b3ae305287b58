//! Recording tape for reverse-mode differentiation.
//!
//! A [`Tape`] records every operation in execution order; since each
//! operation's inputs are created before it, walking the records in
//! reverse is a valid reverse-topological sweep. [`Var`] is a cheap
//! copyable handle into the tape.
//!
//! A tape is single-threaded. Run one tape per training batch or per
//! decoded example; parameters are bound onto a tape as leaves with
//! [`Tape::var`].

use super::{matmul_nn, matmul_nt, matmul_tn, Tensor};
use rand::Rng;
use std::cell::RefCell;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// Dropout behaviour: `Train` samples a mask, `Eval` is the identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DropoutMode {
    Train,
    Eval,
}

enum Op {
    Leaf,
    MatMul { a: usize, b: usize },
    Add { a: usize, b: usize },
    /// Add row vector `v` to every row of `m`.
    AddRow { m: usize, v: usize },
    Mul { a: usize, b: usize },
    Scale { a: usize, k: f64 },
    Relu { a: usize },
    Sigmoid { a: usize },
    Tanh { a: usize },
    ConcatCols { parts: Vec<usize> },
    ConcatRows { parts: Vec<usize> },
    SliceCols { a: usize, start: usize },
    GatherRows { a: usize, rows: Vec<usize> },
    /// Column-wise max over rows; ties resolve to the lowest row index.
    MaxPoolRows { a: usize, argmax: Vec<usize> },
    MeanPoolRows { a: usize },
    SoftmaxRow { a: usize },
    CrossEntropy { dist: usize, target: usize },
    Dropout { a: usize, mask: Vec<f64> },
    Reshape { a: usize },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Records operations for one forward pass.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Probabilities below this are clamped inside [`Tape::cross_entropy`].
pub const CROSS_ENTROPY_CLAMP: f64 = 1e-12;

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
        }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    /// Record a leaf value (parameter or constant input).
    pub fn var(&self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Leaf of zeros, used for empty neighbourhoods and initial states.
    pub fn zeros(&self, rows: usize, cols: usize) -> Var {
        self.var(Tensor::zeros(rows, cols))
    }

    /// Clone of the value at `v`.
    pub fn value(&self, v: Var) -> Tensor {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = self.nodes.borrow();
        (n[v.0].value.rows(), n[v.0].value.cols())
    }

    /// Scalar value of a `1x1` var.
    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes.borrow()[v.0].value.scalar_value()
    }

    fn push(&self, value: Tensor, op: Op) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var(nodes.len() - 1)
    }

    fn with<R>(&self, f: impl FnOnce(&[Node]) -> R) -> R {
        f(&self.nodes.borrow())
    }

    pub fn matmul(&self, a: Var, b: Var) -> Var {
        let out = self.with(|n| matmul_nn(&n[a.0].value, &n[b.0].value));
        out.assert_finite("matmul");
        self.push(out, Op::MatMul { a: a.0, b: b.0 })
    }

    pub fn add(&self, a: Var, b: Var) -> Var {
        let out = self.with(|n| {
            let (x, y) = (&n[a.0].value, &n[b.0].value);
            assert_eq!(x.shape(), y.shape(), "add shape mismatch");
            let data = x.data().iter().zip(y.data()).map(|(p, q)| p + q).collect();
            Tensor::from_vec(x.rows(), x.cols(), data)
        });
        out.assert_finite("add");
        self.push(out, Op::Add { a: a.0, b: b.0 })
    }

    /// Broadcast-add a `1xc` row vector to every row of an `rxc` matrix.
    pub fn add_row(&self, m: Var, v: Var) -> Var {
        let out = self.with(|n| {
            let (x, y) = (&n[m.0].value, &n[v.0].value);
            assert_eq!(y.rows(), 1, "add_row vector must be a single row");
            assert_eq!(x.cols(), y.cols(), "add_row width mismatch");
            let mut data = Vec::with_capacity(x.len());
            for i in 0..x.rows() {
                for (p, q) in x.row(i).iter().zip(y.row(0)) {
                    data.push(p + q);
                }
            }
            Tensor::from_vec(x.rows(), x.cols(), data)
        });
        out.assert_finite("add_row");
        self.push(out, Op::AddRow { m: m.0, v: v.0 })
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, a: Var, b: Var) -> Var {
        let out = self.with(|n| {
            let (x, y) = (&n[a.0].value, &n[b.0].value);
            assert_eq!(x.shape(), y.shape(), "mul shape mismatch");
            let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
            Tensor::from_vec(x.rows(), x.cols(), data)
        });
        out.assert_finite("mul");
        self.push(out, Op::Mul { a: a.0, b: b.0 })
    }

    pub fn scale(&self, a: Var, k: f64) -> Var {
        let out = self.with(|n| {
            let x = &n[a.0].value;
            Tensor::from_vec(x.rows(), x.cols(), x.data().iter().map(|p| p * k).collect())
        });
        out.assert_finite("scale");
        self.push(out, Op::Scale { a: a.0, k })
    }

    pub fn relu(&self, a: Var) -> Var {
        let out = self.with(|n| {
            let x = &n[a.0].value;
            Tensor::from_vec(x.rows(), x.cols(), x.data().iter().map(|p| p.max(0.0)).collect())
        });
        out.assert_finite("relu");
        self.push(out, Op::Relu { a: a.0 })
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        let out = self.with(|n| {
            let x = &n[a.0].value;
            let data = x.data().iter().map(|p| 1.0 / (1.0 + (-p).exp())).collect();
            Tensor::from_vec(x.rows(), x.cols(), data)
        });
        out.assert_finite("sigmoid");
        self.push(out, Op::Sigmoid { a: a.0 })
    }

    pub fn tanh(&self, a: Var) -> Var {
        let out = self.with(|n| {
            let x = &n[a.0].value;
            Tensor::from_vec(x.rows(), x.cols(), x.data().iter().map(|p| p.tanh()).collect())
        });
        out.assert_finite("tanh");
        self.push(out, Op::Tanh { a: a.0 })
    }

    /// Concatenate along columns; all parts share the row count.
    pub fn concat_cols(&self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols needs at least one input");
        let out = self.with(|n| {
            let rows = n[parts[0].0].value.rows();
            let total: usize = parts.iter().map(|p| n[p.0].value.cols()).sum();
            let mut data = Vec::with_capacity(rows * total);
            for i in 0..rows {
                for p in parts {
                    let t = &n[p.0].value;
                    assert_eq!(t.rows(), rows, "concat_cols row mismatch");
                    data.extend_from_slice(t.row(i));
                }
            }
            Tensor::from_vec(rows, total, data)
        });
        self.push(
            out,
            Op::ConcatCols {
                parts: parts.iter().map(|p| p.0).collect(),
            },
        )
    }

    /// Stack along rows; all parts share the column count.
    pub fn concat_rows(&self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows needs at least one input");
        let out = self.with(|n| {
            let cols = n[parts[0].0].value.cols();
            let total: usize = parts.iter().map(|p| n[p.0].value.rows()).sum();
            let mut data = Vec::with_capacity(total * cols);
            for p in parts {
                let t = &n[p.0].value;
                assert_eq!(t.cols(), cols, "concat_rows column mismatch");
                data.extend_from_slice(t.data());
            }
            Tensor::from_vec(total, cols, data)
        });
        self.push(
            out,
            Op::ConcatRows {
                parts: parts.iter().map(|p| p.0).collect(),
            },
        )
    }

    /// Columns `start..start+len`.
    pub fn slice_cols(&self, a: Var, start: usize, len: usize) -> Var {
        let out = self.with(|n| {
            let x = &n[a.0].value;
            assert!(start + len <= x.cols(), "slice_cols out of bounds");
            let mut data = Vec::with_capacity(x.rows() * len);
            for i in 0..x.rows() {
                data.extend_from_slice(&x.row(i)[start..start + len]);
            }
            Tensor::from_vec(x.rows(), len, data)
        });
        self.push(out, Op::SliceCols { a: a.0, start })
    }

    /// Select rows by index; duplicates are allowed. Used both for
    /// embedding lookups and for gathering neighbour states.
    pub fn gather_rows(&self, a: Var, rows: &[usize]) -> Var {
        let out = self.with(|n| {
            let x = &n[a.0].value;
            let mut data = Vec::with_capacity(rows.len() * x.cols());
            for &r in rows {
                assert!(r < x.rows(), "gather_rows index {r} out of bounds");
                data.extend_from_slice(x.row(r));
            }
            Tensor::from_vec(rows.len(), x.cols(), data)
        });
        self.push(
            out,
            Op::GatherRows {
                a: a.0,
                rows: rows.to_vec(),
            },
        )
    }

    /// Column-wise max over all rows, producing a `1xc` row. The
    /// backward pass routes each column's gradient to the lowest row
    /// index attaining the max.
    pub fn max_pool_rows(&self, a: Var) -> Var {
        let (out, argmax) = self.with(|n| {
            let x = &n[a.0].value;
            assert!(x.rows() >= 1, "max_pool_rows on empty input");
            let mut best = x.row(0).to_vec();
            let mut argmax = vec![0usize; x.cols()];
            for i in 1..x.rows() {
                for (j, &v) in x.row(i).iter().enumerate() {
                    if v > best[j] {
                        best[j] = v;
                        argmax[j] = i;
                    }
                }
            }
            (Tensor::from_vec(1, x.cols(), best), argmax)
        });
        out.assert_finite("max_pool_rows");
        self.push(out, Op::MaxPoolRows { a: a.0, argmax })
    }

    /// Column-wise mean over all rows, producing a `1xc` row.
    pub fn mean_pool_rows(&self, a: Var) -> Var {
        let out = self.with(|n| {
            let x = &n[a.0].value;
            assert!(x.rows() >= 1, "mean_pool_rows on empty input");
            let mut acc = vec![0.0; x.cols()];
            for i in 0..x.rows() {
                for (j, &v) in x.row(i).iter().enumerate() {
                    acc[j] += v;
                }
            }
            let r = x.rows() as f64;
            for v in &mut acc {
                *v /= r;
            }
            Tensor::from_vec(1, x.cols(), acc)
        });
        out.assert_finite("mean_pool_rows");
        self.push(out, Op::MeanPoolRows { a: a.0 })
    }

    /// Numerically stable softmax of a `1xn` row; the output sums to 1.
    pub fn softmax_row(&self, a: Var) -> Var {
        let out = self.with(|n| {
            let x = &n[a.0].value;
            assert_eq!(x.rows(), 1, "softmax_row expects a single row");
            assert!(x.cols() >= 1, "softmax_row on empty input");
            let max = x.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = x.data().iter().map(|v| (v - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            Tensor::from_vec(1, x.cols(), exps.into_iter().map(|e| e / sum).collect())
        });
        out.assert_finite("softmax_row");
        self.push(out, Op::SoftmaxRow { a: a.0 })
    }

    /// Negative log-likelihood `-ln(dist[target])` of a `1xn`
    /// distribution, clamped at [`CROSS_ENTROPY_CLAMP`].
    pub fn cross_entropy(&self, dist: Var, target: usize) -> Var {
        let out = self.with(|n| {
            let d = &n[dist.0].value;
            assert_eq!(d.rows(), 1, "cross_entropy expects a 1xn distribution");
            assert!(target < d.cols(), "cross_entropy target {target} out of range");
            let p = d.get(0, target).max(CROSS_ENTROPY_CLAMP);
            Tensor::scalar(-p.ln())
        });
        out.assert_finite("cross_entropy");
        self.push(out, Op::CrossEntropy { dist: dist.0, target })
    }

    /// Inverted dropout: in `Train` mode each element is zeroed with
    /// probability `p` and survivors are scaled by `1/(1-p)`, so that
    /// `Eval` mode is the identity. Requires `0 <= p < 1`.
    pub fn dropout<R: Rng>(&self, a: Var, p: f64, mode: DropoutMode, rng: &mut R) -> Var {
        assert!((0.0..1.0).contains(&p), "dropout rate must satisfy 0 <= p < 1, got {p}");
        if mode == DropoutMode::Eval || p == 0.0 {
            return a;
        }
        let keep = 1.0 - p;
        let (rows, cols) = self.shape(a);
        let mask: Vec<f64> = (0..rows * cols)
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { 1.0 / keep })
            .collect();
        let out = self.with(|n| {
            let x = &n[a.0].value;
            let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
            Tensor::from_vec(rows, cols, data)
        });
        self.push(out, Op::Dropout { a: a.0, mask })
    }

    /// Reinterpret the data with a new shape of the same length.
    pub fn reshape(&self, a: Var, rows: usize, cols: usize) -> Var {
        let out = self.with(|n| {
            let x = &n[a.0].value;
            assert_eq!(x.len(), rows * cols, "reshape length mismatch");
            Tensor::from_vec(rows, cols, x.data().to_vec())
        });
        self.push(out, Op::Reshape { a: a.0 })
    }

    /// Mean of `1x1` scalars.
    pub fn mean_scalars(&self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "mean_scalars needs at least one input");
        let mut acc = parts[0];
        for p in &parts[1..] {
            acc = self.add(acc, *p);
        }
        self.scale(acc, 1.0 / parts.len() as f64)
    }

    /// Reverse sweep from a scalar loss; returns gradients for every
    /// var on the tape. Vars not on the path to `loss` get zeros.
    pub fn backward(&self, loss: Var) -> Gradients {
        let nodes = self.nodes.borrow();
        assert_eq!(
            nodes[loss.0].value.shape(),
            (1, 1),
            "backward requires a scalar (1x1) loss"
        );
        let mut grads: Vec<Tensor> = nodes
            .iter()
            .map(|n| Tensor::zeros(n.value.rows(), n.value.cols()))
            .collect();
        grads[loss.0].set(0, 0, 1.0);

        for idx in (0..=loss.0).rev() {
            let node = &nodes[idx];
            // Nothing flowed into this node; skip the dispatch.
            if grads[idx].data().iter().all(|v| *v == 0.0) {
                continue;
            }
            match &node.op {
                Op::Leaf => {}
                Op::MatMul { a, b } => {
                    let da = matmul_nt(&grads[idx], &nodes[*b].value);
                    let db = matmul_tn(&nodes[*a].value, &grads[idx]);
                    accumulate(&mut grads[*a], &da);
                    accumulate(&mut grads[*b], &db);
                }
                Op::Add { a, b } => {
                    let g = grads[idx].clone();
                    accumulate(&mut grads[*a], &g);
                    accumulate(&mut grads[*b], &g);
                }
                Op::AddRow { m, v } => {
                    let g = grads[idx].clone();
                    accumulate(&mut grads[*m], &g);
                    let cols = g.cols();
                    let gv = &mut grads[*v];
                    for i in 0..g.rows() {
                        for j in 0..cols {
                            let cur = gv.get(0, j);
                            gv.set(0, j, cur + g.get(i, j));
                        }
                    }
                }
                Op::Mul { a, b } => {
                    let g = grads[idx].clone();
                    let da_data: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(nodes[*b].value.data())
                        .map(|(g, q)| g * q)
                        .collect();
                    let db_data: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(nodes[*a].value.data())
                        .map(|(g, p)| g * p)
                        .collect();
                    let (r, c) = (g.rows(), g.cols());
                    accumulate(&mut grads[*a], &Tensor::from_vec(r, c, da_data));
                    accumulate(&mut grads[*b], &Tensor::from_vec(r, c, db_data));
                }
                Op::Scale { a, k } => {
                    let g = grads[idx].clone();
                    let scaled = Tensor::from_vec(
                        g.rows(),
                        g.cols(),
                        g.data().iter().map(|v| v * k).collect(),
                    );
                    accumulate(&mut grads[*a], &scaled);
                }
                Op::Relu { a } => {
                    let g = grads[idx].clone();
                    let data: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(node.value.data())
                        .map(|(g, o)| if *o > 0.0 { *g } else { 0.0 })
                        .collect();
                    accumulate(&mut grads[*a], &Tensor::from_vec(g.rows(), g.cols(), data));
                }
                Op::Sigmoid { a } => {
                    let g = grads[idx].clone();
                    let data: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(node.value.data())
                        .map(|(g, o)| g * o * (1.0 - o))
                        .collect();
                    accumulate(&mut grads[*a], &Tensor::from_vec(g.rows(), g.cols(), data));
                }
                Op::Tanh { a } => {
                    let g = grads[idx].clone();
                    let data: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(node.value.data())
                        .map(|(g, o)| g * (1.0 - o * o))
                        .collect();
                    accumulate(&mut grads[*a], &Tensor::from_vec(g.rows(), g.cols(), data));
                }
                Op::ConcatCols { parts } => {
                    let g = grads[idx].clone();
                    let mut offset = 0;
                    for p in parts {
                        let c = nodes[*p].value.cols();
                        let mut piece = Tensor::zeros(g.rows(), c);
                        for i in 0..g.rows() {
                            for j in 0..c {
                                piece.set(i, j, g.get(i, offset + j));
                            }
                        }
                        accumulate(&mut grads[*p], &piece);
                        offset += c;
                    }
                }
                Op::ConcatRows { parts } => {
                    let g = grads[idx].clone();
                    let mut offset = 0;
                    for p in parts {
                        let r = nodes[*p].value.rows();
                        let mut piece = Tensor::zeros(r, g.cols());
                        for i in 0..r {
                            for j in 0..g.cols() {
                                piece.set(i, j, g.get(offset + i, j));
                            }
                        }
                        accumulate(&mut grads[*p], &piece);
                        offset += r;
                    }
                }
                Op::SliceCols { a, start } => {
                    let g = grads[idx].clone();
                    let ga = &mut grads[*a];
                    for i in 0..g.rows() {
                        for j in 0..g.cols() {
                            let cur = ga.get(i, start + j);
                            ga.set(i, start + j, cur + g.get(i, j));
                        }
                    }
                }
                Op::GatherRows { a, rows } => {
                    let g = grads[idx].clone();
                    let ga = &mut grads[*a];
                    for (k, &r) in rows.iter().enumerate() {
                        for j in 0..g.cols() {
                            let cur = ga.get(r, j);
                            ga.set(r, j, cur + g.get(k, j));
                        }
                    }
                }
                Op::MaxPoolRows { a, argmax } => {
                    let g = grads[idx].clone();
                    let ga = &mut grads[*a];
                    for (j, &r) in argmax.iter().enumerate() {
                        let cur = ga.get(r, j);
                        ga.set(r, j, cur + g.get(0, j));
                    }
                }
                Op::MeanPoolRows { a } => {
                    let g = grads[idx].clone();
                    let rows = nodes[*a].value.rows();
                    let share = 1.0 / rows as f64;
                    let ga = &mut grads[*a];
                    for i in 0..rows {
                        for j in 0..g.cols() {
                            let cur = ga.get(i, j);
                            ga.set(i, j, cur + g.get(0, j) * share);
                        }
                    }
                }
                Op::SoftmaxRow { a } => {
                    let g = grads[idx].clone();
                    let s = node.value.data();
                    let dot: f64 = g.data().iter().zip(s).map(|(g, s)| g * s).sum();
                    let data: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(s)
                        .map(|(g, s)| s * (g - dot))
                        .collect();
                    accumulate(&mut grads[*a], &Tensor::from_vec(1, s.len(), data));
                }
                Op::CrossEntropy { dist, target } => {
                    let go = grads[idx].get(0, 0);
                    let p = nodes[*dist].value.get(0, *target);
                    // In the clamped region the loss is flat in p.
                    if p >= CROSS_ENTROPY_CLAMP {
                        let cur = grads[*dist].get(0, *target);
                        grads[*dist].set(0, *target, cur - go / p);
                    }
                }
                Op::Dropout { a, mask } => {
                    let g = grads[idx].clone();
                    let data: Vec<f64> =
                        g.data().iter().zip(mask).map(|(g, m)| g * m).collect();
                    accumulate(&mut grads[*a], &Tensor::from_vec(g.rows(), g.cols(), data));
                }
                Op::Reshape { a } => {
                    let g = grads[idx].clone();
                    let (r, c) = (nodes[*a].value.rows(), nodes[*a].value.cols());
                    accumulate(&mut grads[*a], &Tensor::from_vec(r, c, g.data().to_vec()));
                }
            }
        }
        Gradients { grads }
    }
}

fn accumulate(into: &mut Tensor, from: &Tensor) {
    assert_eq!(into.shape(), from.shape(), "gradient shape mismatch");
    for (a, b) in into.data_mut().iter_mut().zip(from.data()) {
        *a += b;
    }
}

/// Result of [`Tape::backward`]: one gradient tensor per var.
pub struct Gradients {
    grads: Vec<Tensor>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> &Tensor {
        &self.grads[v.0]
    }
}
