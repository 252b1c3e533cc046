//! Reverse-mode automatic differentiation over dense 2D tensors.
//!
//! Every operation evaluates eagerly and records a backward closure; calling
//! [`Tensor::backward`] on a scalar root accumulates gradients into every
//! reachable tensor that requires them. Storage is dense row-major `f64`
//! without views or strides: batches here are at most a few thousand rows by
//! a few hundred columns, so copies are cheap and the bookkeeping stays flat.
//!
//! Graphs are single-threaded (`Rc`-based); independent graphs may live on
//! different threads. Gradients accumulate additively until
//! [`Tensor::zero_grad`], so several scalar losses can be backpropagated
//! through one graph.

use std::cell::{Ref, RefCell};
use std::collections::{HashMap, HashSet};
use std::rc::Rc;

use crate::error::Error;

/// Floor applied to `ln` inputs; GAN log-losses saturate regularly.
pub const LN_FLOOR: f64 = 1e-12;

type BackwardFn = Box<dyn Fn(&[f64], &mut GradSink)>;

struct Node {
    rows: usize,
    cols: usize,
    op: &'static str,
    requires_grad: bool,
    parents: Vec<Tensor>,
    backward: Option<BackwardFn>,
    buffers: RefCell<Buffers>,
}

struct Buffers {
    values: Vec<f64>,
    grad: Vec<f64>,
}

/// Dense value node in a reverse-mode computation graph.
#[derive(Clone)]
pub struct Tensor(Rc<Node>);

/// Per-backward-pass gradient accumulator keyed by node identity.
pub struct GradSink {
    bufs: HashMap<usize, Vec<f64>>,
}

impl GradSink {
    fn new() -> Self {
        GradSink { bufs: HashMap::new() }
    }

    /// Accumulate into `target`'s pending gradient; no-op for tensors that
    /// do not require gradients.
    fn accum(&mut self, target: &Tensor, f: impl FnOnce(&mut [f64])) {
        if !target.requires_grad() {
            return;
        }
        let buf = self
            .bufs
            .entry(target.key())
            .or_insert_with(|| vec![0.0; target.len()]);
        f(buf);
    }

    fn take(&mut self, t: &Tensor) -> Option<Vec<f64>> {
        self.bufs.remove(&t.key())
    }
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &(self.0.rows, self.0.cols))
            .field("op", &self.0.op)
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

fn finite_check(op: &'static str, values: &[f64]) {
    if cfg!(debug_assertions) {
        for (i, v) in values.iter().enumerate() {
            assert!(
                v.is_finite(),
                "numeric error in `{op}`: non-finite output {v} at index {i}"
            );
        }
    }
}

impl Tensor {
    // ----- constructors -------------------------------------------------

    fn new_node(
        rows: usize,
        cols: usize,
        values: Vec<f64>,
        op: &'static str,
        requires_grad: bool,
        parents: Vec<Tensor>,
        backward: Option<BackwardFn>,
    ) -> Tensor {
        assert_eq!(
            values.len(),
            rows * cols,
            "`{op}`: {rows}x{cols} shape does not match {} values",
            values.len()
        );
        finite_check(op, &values);
        let grad = vec![0.0; values.len()];
        Tensor(Rc::new(Node {
            rows,
            cols,
            op,
            requires_grad,
            parents,
            backward,
            buffers: RefCell::new(Buffers { values, grad }),
        }))
    }

    fn from_op(
        rows: usize,
        cols: usize,
        values: Vec<f64>,
        op: &'static str,
        parents: Vec<Tensor>,
        backward: BackwardFn,
    ) -> Tensor {
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        if requires_grad {
            Tensor::new_node(rows, cols, values, op, true, parents, Some(backward))
        } else {
            // Dead branch for gradients: drop the closure and the parents so
            // constant subgraphs free eagerly.
            Tensor::new_node(rows, cols, values, op, false, Vec::new(), None)
        }
    }

    /// Leaf that participates in gradients (parameters, probed inputs).
    pub fn leaf(rows: usize, cols: usize, values: Vec<f64>) -> Tensor {
        Tensor::new_node(rows, cols, values, "leaf", true, Vec::new(), None)
    }

    /// Leaf constant; gradients never flow into it.
    pub fn constant(rows: usize, cols: usize, values: Vec<f64>) -> Tensor {
        Tensor::new_node(rows, cols, values, "const", false, Vec::new(), None)
    }

    /// 1x1 constant.
    pub fn scalar(v: f64) -> Tensor {
        Tensor::constant(1, 1, vec![v])
    }

    pub fn zeros_leaf(rows: usize, cols: usize) -> Tensor {
        Tensor::leaf(rows, cols, vec![0.0; rows * cols])
    }

    // ----- accessors ----------------------------------------------------

    pub fn rows(&self) -> usize {
        self.0.rows
    }

    pub fn cols(&self) -> usize {
        self.0.cols
    }

    pub fn len(&self) -> usize {
        self.0.rows * self.0.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn op(&self) -> &'static str {
        self.0.op
    }

    fn key(&self) -> usize {
        Rc::as_ptr(&self.0) as usize
    }

    /// True if both handles point at the same graph node.
    pub fn same_node(&self, other: &Tensor) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }

    pub fn values(&self) -> Ref<'_, [f64]> {
        Ref::map(self.0.buffers.borrow(), |b| b.values.as_slice())
    }

    pub fn grad(&self) -> Ref<'_, [f64]> {
        Ref::map(self.0.buffers.borrow(), |b| b.grad.as_slice())
    }

    pub fn to_values(&self) -> Vec<f64> {
        self.0.buffers.borrow().values.clone()
    }

    pub fn to_grad(&self) -> Vec<f64> {
        self.0.buffers.borrow().grad.clone()
    }

    /// Scalar value of a 1x1 tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.len(), 1, "item: tensor is {}x{}", self.0.rows, self.0.cols);
        self.0.buffers.borrow().values[0]
    }

    /// Mutate values and gradient in place (optimizer hook).
    pub fn update(&self, f: impl FnOnce(&mut [f64], &mut [f64])) {
        let mut b = self.0.buffers.borrow_mut();
        let Buffers { values, grad } = &mut *b;
        f(values, grad);
    }

    pub fn zero_grad(&self) {
        self.0.buffers.borrow_mut().grad.fill(0.0);
    }

    fn add_to_grad(&self, delta: &[f64]) {
        let mut b = self.0.buffers.borrow_mut();
        for (g, d) in b.grad.iter_mut().zip(delta) {
            *g += d;
        }
    }

    // ----- backward -----------------------------------------------------

    /// Accumulate `d(self)/d(ancestor)` into every requires-grad ancestor.
    ///
    /// `self` must be scalar. Calling twice without `zero_grad` adds the
    /// gradients again.
    pub fn backward(&self) {
        assert_eq!(
            self.len(),
            1,
            "backward: root must be scalar, got {}x{} from op `{}`",
            self.0.rows,
            self.0.cols,
            self.0.op
        );
        if !self.requires_grad() {
            return;
        }
        let order = self.topo_order();
        let mut sink = GradSink::new();
        sink.bufs.insert(self.key(), vec![1.0]);
        for node in order.iter().rev() {
            let buf = match sink.take(node) {
                Some(b) => b,
                None => continue,
            };
            node.add_to_grad(&buf);
            if let Some(back) = &node.0.backward {
                back(&buf, &mut sink);
            }
        }
    }

    /// Post-order over the requires-grad subgraph (parents before children).
    fn topo_order(&self) -> Vec<Tensor> {
        enum Step {
            Enter(Tensor),
            Exit(Tensor),
        }
        let mut order = Vec::new();
        let mut visited = HashSet::new();
        let mut stack = vec![Step::Enter(self.clone())];
        while let Some(step) = stack.pop() {
            match step {
                Step::Enter(t) => {
                    if !visited.insert(t.key()) {
                        continue;
                    }
                    stack.push(Step::Exit(t.clone()));
                    for p in &t.0.parents {
                        if p.requires_grad() && !visited.contains(&p.key()) {
                            stack.push(Step::Enter(p.clone()));
                        }
                    }
                }
                Step::Exit(t) => order.push(t),
            }
        }
        order
    }

    // ----- ops ----------------------------------------------------------

    /// Matrix product `(n,k) x (k,m) -> (n,m)`.
    pub fn matmul(&self, rhs: &Tensor) -> Tensor {
        let (n, k) = (self.rows(), self.cols());
        let (k2, m) = (rhs.rows(), rhs.cols());
        assert_eq!(k, k2, "matmul: inner dims mismatch {n}x{k} . {k2}x{m}");
        let a = self.to_values();
        let b = rhs.to_values();
        let mut out = vec![0.0; n * m];
        matmul_into(&a, &b, &mut out, n, k, m);
        let (pa, pb) = (self.clone(), rhs.clone());
        let (ca, cb) = (a, b);
        Tensor::from_op(
            n,
            m,
            out,
            "matmul",
            vec![self.clone(), rhs.clone()],
            Box::new(move |dc, sink| {
                sink.accum(&pa, |da| {
                    // dA[i,k] += sum_j dC[i,j] * B[k,j]
                    for i in 0..n {
                        let dc_row = &dc[i * m..(i + 1) * m];
                        let da_row = &mut da[i * k..(i + 1) * k];
                        for (kk, slot) in da_row.iter_mut().enumerate() {
                            let b_row = &cb[kk * m..(kk + 1) * m];
                            let mut acc = 0.0;
                            for (d, bv) in dc_row.iter().zip(b_row) {
                                acc += d * bv;
                            }
                            *slot += acc;
                        }
                    }
                });
                sink.accum(&pb, |db| {
                    // dB[k,j] += sum_i A[i,k] * dC[i,j]
                    for i in 0..n {
                        let a_row = &ca[i * k..(i + 1) * k];
                        let dc_row = &dc[i * m..(i + 1) * m];
                        for (kk, &aik) in a_row.iter().enumerate() {
                            let db_row = &mut db[kk * m..(kk + 1) * m];
                            for (slot, d) in db_row.iter_mut().zip(dc_row) {
                                *slot += aik * d;
                            }
                        }
                    }
                });
            }),
        )
    }

    /// Elementwise sum; `rhs` may be `1 x cols` and broadcasts over rows.
    pub fn add(&self, rhs: &Tensor) -> Tensor {
        let (n, m) = (self.rows(), self.cols());
        let broadcast = rhs.rows() == 1 && n > 1;
        assert!(
            (rhs.rows() == n || broadcast) && rhs.cols() == m,
            "add: shape mismatch {n}x{m} + {}x{}",
            rhs.rows(),
            rhs.cols()
        );
        let a = self.to_values();
        let b = rhs.to_values();
        let mut out = a;
        if broadcast {
            for i in 0..n {
                for (o, bv) in out[i * m..(i + 1) * m].iter_mut().zip(&b) {
                    *o += bv;
                }
            }
        } else {
            for (o, bv) in out.iter_mut().zip(&b) {
                *o += bv;
            }
        }
        let (pa, pb) = (self.clone(), rhs.clone());
        Tensor::from_op(
            n,
            m,
            out,
            "add",
            vec![self.clone(), rhs.clone()],
            Box::new(move |dc, sink| {
                sink.accum(&pa, |da| {
                    for (g, d) in da.iter_mut().zip(dc) {
                        *g += d;
                    }
                });
                sink.accum(&pb, |db| {
                    if broadcast {
                        for i in 0..n {
                            for (g, d) in db.iter_mut().zip(&dc[i * m..(i + 1) * m]) {
                                *g += d;
                            }
                        }
                    } else {
                        for (g, d) in db.iter_mut().zip(dc) {
                            *g += d;
                        }
                    }
                });
            }),
        )
    }

    /// Elementwise difference (same shapes).
    pub fn sub(&self, rhs: &Tensor) -> Tensor {
        let (n, m) = (self.rows(), self.cols());
        assert!(
            rhs.rows() == n && rhs.cols() == m,
            "sub: shape mismatch {n}x{m} - {}x{}",
            rhs.rows(),
            rhs.cols()
        );
        let mut out = self.to_values();
        for (o, bv) in out.iter_mut().zip(rhs.values().iter()) {
            *o -= bv;
        }
        let (pa, pb) = (self.clone(), rhs.clone());
        Tensor::from_op(
            n,
            m,
            out,
            "sub",
            vec![self.clone(), rhs.clone()],
            Box::new(move |dc, sink| {
                sink.accum(&pa, |da| {
                    for (g, d) in da.iter_mut().zip(dc) {
                        *g += d;
                    }
                });
                sink.accum(&pb, |db| {
                    for (g, d) in db.iter_mut().zip(dc) {
                        *g -= d;
                    }
                });
            }),
        )
    }

    /// Elementwise product (same shapes).
    pub fn mul(&self, rhs: &Tensor) -> Tensor {
        let (n, m) = (self.rows(), self.cols());
        assert!(
            rhs.rows() == n && rhs.cols() == m,
            "mul: shape mismatch {n}x{m} * {}x{}",
            rhs.rows(),
            rhs.cols()
        );
        let a = self.to_values();
        let b = rhs.to_values();
        let out: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        let (pa, pb) = (self.clone(), rhs.clone());
        Tensor::from_op(
            n,
            m,
            out,
            "mul",
            vec![self.clone(), rhs.clone()],
            Box::new(move |dc, sink| {
                sink.accum(&pa, |da| {
                    for ((g, d), y) in da.iter_mut().zip(dc).zip(&b) {
                        *g += d * y;
                    }
                });
                sink.accum(&pb, |db| {
                    for ((g, d), x) in db.iter_mut().zip(dc).zip(&a) {
                        *g += d * x;
                    }
                });
            }),
        )
    }

    /// Unary op whose derivative is a function of the input values.
    fn unary_from_input(
        &self,
        op: &'static str,
        forward: impl Fn(f64) -> f64,
        dval_dx: impl Fn(f64) -> f64 + 'static,
    ) -> Tensor {
        let x = self.to_values();
        let out: Vec<f64> = x.iter().map(|&v| forward(v)).collect();
        let parent = self.clone();
        Tensor::from_op(
            self.rows(),
            self.cols(),
            out,
            op,
            vec![self.clone()],
            Box::new(move |dc, sink| {
                sink.accum(&parent, |dx| {
                    for i in 0..dx.len() {
                        dx[i] += dc[i] * dval_dx(x[i]);
                    }
                });
            }),
        )
    }

    /// Unary op whose derivative is a function of the output values.
    fn unary_from_output(
        &self,
        op: &'static str,
        forward: impl Fn(f64) -> f64,
        dval_dy: impl Fn(f64) -> f64 + 'static,
    ) -> Tensor {
        let out: Vec<f64> = self.values().iter().map(|&v| forward(v)).collect();
        let out_copy = out.clone();
        let parent = self.clone();
        Tensor::from_op(
            self.rows(),
            self.cols(),
            out,
            op,
            vec![self.clone()],
            Box::new(move |dc, sink| {
                sink.accum(&parent, |dx| {
                    for i in 0..dx.len() {
                        dx[i] += dc[i] * dval_dy(out_copy[i]);
                    }
                });
            }),
        )
    }

    pub fn neg(&self) -> Tensor {
        self.unary_from_input("neg", |v| -v, |_| -1.0)
    }

    pub fn exp(&self) -> Tensor {
        self.unary_from_output("exp", f64::exp, |y| y)
    }

    /// Natural log with inputs floored at [`LN_FLOOR`]; the floored region
    /// has zero gradient.
    pub fn ln(&self) -> Tensor {
        self.unary_from_input(
            "ln",
            |v| v.max(LN_FLOOR).ln(),
            |x| if x >= LN_FLOOR { 1.0 / x } else { 0.0 },
        )
    }

    pub fn square(&self) -> Tensor {
        self.unary_from_input("square", |v| v * v, |x| 2.0 * x)
    }

    pub fn abs(&self) -> Tensor {
        self.unary_from_input("abs", f64::abs, |x| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
    }

    pub fn tanh(&self) -> Tensor {
        self.unary_from_output("tanh", f64::tanh, |y| 1.0 - y * y)
    }

    /// Logistic function, computed in the numerically stable split form.
    pub fn sigmoid(&self) -> Tensor {
        self.unary_from_output(
            "sigmoid",
            |v| {
                if v >= 0.0 {
                    1.0 / (1.0 + (-v).exp())
                } else {
                    let e = v.exp();
                    e / (1.0 + e)
                }
            },
            |y| y * (1.0 - y),
        )
    }

    pub fn relu(&self) -> Tensor {
        self.unary_from_input("relu", |v| v.max(0.0), |x| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn leaky_relu(&self, slope: f64) -> Tensor {
        self.unary_from_input(
            "leaky_relu",
            move |v| if v > 0.0 { v } else { slope * v },
            move |x| if x > 0.0 { 1.0 } else { slope },
        )
    }

    /// Clamp to `[lo, hi]`; gradient passes only inside the interval
    /// (inclusive).
    pub fn clamp(&self, lo: f64, hi: f64) -> Tensor {
        assert!(lo <= hi, "clamp: lo {lo} > hi {hi}");
        self.unary_from_input(
            "clamp",
            move |v| v.clamp(lo, hi),
            move |x| if x >= lo && x <= hi { 1.0 } else { 0.0 },
        )
    }

    /// Elementwise `x * mul + add` with scalar constants.
    pub fn affine(&self, mul: f64, add: f64) -> Tensor {
        self.unary_from_input("affine", move |v| v * mul + add, move |_| mul)
    }

    /// Multiply by a scalar constant.
    pub fn scale(&self, c: f64) -> Tensor {
        self.affine(c, 0.0)
    }

    /// Elementwise power with a constant exponent; inputs must be positive.
    pub fn powf_const(&self, p: f64) -> Tensor {
        self.unary_from_input("powf", move |v| v.powf(p), move |x| p * x.powf(p - 1.0))
    }

    /// Sum of all entries as a 1x1 tensor.
    pub fn sum(&self) -> Tensor {
        let total: f64 = self.values().iter().sum();
        let parent = self.clone();
        Tensor::from_op(
            1,
            1,
            vec![total],
            "sum",
            vec![self.clone()],
            Box::new(move |dc, sink| {
                sink.accum(&parent, |dx| {
                    for g in dx.iter_mut() {
                        *g += dc[0];
                    }
                });
            }),
        )
    }

    /// Mean of all entries as a 1x1 tensor.
    pub fn mean(&self) -> Tensor {
        let n = self.len();
        assert!(n > 0, "mean: empty tensor");
        let total: f64 = self.values().iter().sum();
        let inv = 1.0 / n as f64;
        let parent = self.clone();
        Tensor::from_op(
            1,
            1,
            vec![total * inv],
            "mean",
            vec![self.clone()],
            Box::new(move |dc, sink| {
                sink.accum(&parent, |dx| {
                    let d = dc[0] * inv;
                    for g in dx.iter_mut() {
                        *g += d;
                    }
                });
            }),
        )
    }

    /// Per-row sums, `(n,m) -> (n,1)`.
    pub fn row_sums(&self) -> Tensor {
        let (n, m) = (self.rows(), self.cols());
        let vals = self.values();
        let out: Vec<f64> = (0..n).map(|i| vals[i * m..(i + 1) * m].iter().sum()).collect();
        drop(vals);
        let parent = self.clone();
        Tensor::from_op(
            n,
            1,
            out,
            "row_sums",
            vec![self.clone()],
            Box::new(move |dc, sink| {
                sink.accum(&parent, |dx| {
                    for i in 0..n {
                        for g in dx[i * m..(i + 1) * m].iter_mut() {
                            *g += dc[i];
                        }
                    }
                });
            }),
        )
    }

    /// Concatenate along the feature axis (columns); all parts share rows.
    pub fn concat_cols(parts: &[&Tensor]) -> Tensor {
        assert!(!parts.is_empty(), "concat_cols: no parts");
        let n = parts[0].rows();
        for p in parts {
            assert_eq!(p.rows(), n, "concat_cols: row mismatch");
        }
        let widths: Vec<usize> = parts.iter().map(|p| p.cols()).collect();
        let m: usize = widths.iter().sum();
        let mut out = vec![0.0; n * m];
        let mut offset = 0;
        for (p, &w) in parts.iter().zip(&widths) {
            let vals = p.values();
            for i in 0..n {
                out[i * m + offset..i * m + offset + w].copy_from_slice(&vals[i * w..(i + 1) * w]);
            }
            offset += w;
        }
        let owned: Vec<Tensor> = parts.iter().map(|&p| p.clone()).collect();
        let handles = owned.clone();
        Tensor::from_op(
            n,
            m,
            out,
            "concat_cols",
            owned,
            Box::new(move |dc, sink| {
                let mut offset = 0;
                for (p, &w) in handles.iter().zip(&widths) {
                    sink.accum(p, |dx| {
                        for i in 0..n {
                            for j in 0..w {
                                dx[i * w + j] += dc[i * m + offset + j];
                            }
                        }
                    });
                    offset += w;
                }
            }),
        )
    }

    pub fn transpose(&self) -> Tensor {
        let (n, m) = (self.rows(), self.cols());
        let vals = self.values();
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                out[j * n + i] = vals[i * m + j];
            }
        }
        drop(vals);
        let parent = self.clone();
        Tensor::from_op(
            m,
            n,
            out,
            "transpose",
            vec![self.clone()],
            Box::new(move |dc, sink| {
                sink.accum(&parent, |dx| {
                    for i in 0..n {
                        for j in 0..m {
                            dx[i * m + j] += dc[j * n + i];
                        }
                    }
                });
            }),
        )
    }

    /// Elementwise branch: `mask[i] ? on_true[i] : on_false[i]`, routing
    /// gradients down the taken branch only.
    pub fn select(mask: &[bool], on_true: &Tensor, on_false: &Tensor) -> Tensor {
        let (n, m) = (on_true.rows(), on_true.cols());
        assert!(
            on_false.rows() == n && on_false.cols() == m && mask.len() == n * m,
            "select: mismatched shapes {n}x{m} vs {}x{} with mask len {}",
            on_false.rows(),
            on_false.cols(),
            mask.len()
        );
        let a = on_true.to_values();
        let b = on_false.to_values();
        let out: Vec<f64> = mask
            .iter()
            .enumerate()
            .map(|(i, &t)| if t { a[i] } else { b[i] })
            .collect();
        let mask: Vec<bool> = mask.to_vec();
        let mask2 = mask.clone();
        let (pa, pb) = (on_true.clone(), on_false.clone());
        Tensor::from_op(
            n,
            m,
            out,
            "select",
            vec![on_true.clone(), on_false.clone()],
            Box::new(move |dc, sink| {
                sink.accum(&pa, |dx| {
                    for i in 0..dx.len() {
                        if mask[i] {
                            dx[i] += dc[i];
                        }
                    }
                });
                sink.accum(&pb, |dx| {
                    for i in 0..dx.len() {
                        if !mask2[i] {
                            dx[i] += dc[i];
                        }
                    }
                });
            }),
        )
    }

    /// Copy of the values as a fresh constant; cuts the graph.
    pub fn detach(&self) -> Tensor {
        Tensor::constant(self.rows(), self.cols(), self.to_values())
    }

    /// Hook for ops with hand-written derivative rules (e.g. log-det).
    pub(crate) fn custom_op(
        rows: usize,
        cols: usize,
        values: Vec<f64>,
        op: &'static str,
        parent: &Tensor,
        backward: impl Fn(&[f64], &mut [f64]) + 'static,
    ) -> Tensor {
        let p = parent.clone();
        Tensor::from_op(
            rows,
            cols,
            values,
            op,
            vec![parent.clone()],
            Box::new(move |dc, sink| {
                sink.accum(&p, |dx| backward(dc, dx));
            }),
        )
    }
}

fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * m..(i + 1) * m];
        for (kk, &aik) in a_row.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let b_row = &b[kk * m..(kk + 1) * m];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aik * bv;
            }
        }
    }
}

// ----- gradient checking --------------------------------------------------

/// Outcome of a finite-difference gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tol
    }
}

/// Compare the analytic gradient of `f` at `x0` against central finite
/// differences.
///
/// Relative error per coordinate is `|a - n| / max(|a| + |n|, 1e-6)`; the
/// report carries the worst coordinate.
pub fn grad_check<F>(
    f: F,
    x0: &[f64],
    rows: usize,
    cols: usize,
    step: f64,
    tol: f64,
) -> Result<GradCheckReport, Error>
where
    F: Fn(&Tensor) -> Tensor,
{
    if step <= 0.0 {
        return Err(Error::Contract(format!("grad_check: step must be > 0, got {step}")));
    }
    assert_eq!(x0.len(), rows * cols, "grad_check: shape mismatch");

    let x = Tensor::leaf(rows, cols, x0.to_vec());
    let y = f(&x);
    assert_eq!(y.len(), 1, "grad_check: f must build a scalar");
    let y0 = y.item();
    if !y0.is_finite() {
        return Err(Error::Numeric { op: "grad_check", detail: format!("f(x) = {y0}") });
    }
    y.backward();
    let analytic = x.to_grad();

    let mut max_rel_err = 0.0;
    let mut worst_index = 0;
    for i in 0..x0.len() {
        let mut plus = x0.to_vec();
        plus[i] += step;
        let mut minus = x0.to_vec();
        minus[i] -= step;
        let fp = f(&Tensor::constant(rows, cols, plus)).item();
        let fm = f(&Tensor::constant(rows, cols, minus)).item();
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::Numeric {
                op: "grad_check",
                detail: format!("f(x +/- step) non-finite at index {i}"),
            });
        }
        let numeric = (fp - fm) / (2.0 * step);
        let a = analytic[i];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-6);
        if rel > max_rel_err {
            max_rel_err = rel;
            worst_index = i;
        }
    }
    Ok(GradCheckReport { max_rel_err, worst_index, tol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sigmoid_at_zero_is_half() {
        let x = Tensor::constant(1, 1, vec![0.0]);
        assert_eq!(x.sigmoid().item(), 0.5);
    }

    #[test]
    fn matmul_identity() {
        let eye = Tensor::constant(3, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let a = Tensor::constant(3, 3, vec![2.0, -1.0, 0.5, 3.0, 4.0, -2.0, 0.0, 7.0, 1.5]);
        let out = eye.matmul(&a);
        assert_eq!(out.to_values(), a.to_values());
    }

    #[test]
    fn exp_ln_inverse_pair() {
        let x = Tensor::constant(1, 1, vec![0.37]);
        let y = x.ln().exp();
        assert!((y.item() - 0.37).abs() < 1e-12);
    }

    #[test]
    fn backward_square_sum() {
        let x = Tensor::leaf(1, 3, vec![1.0, 2.0, 3.0]);
        let y = x.mul(&x).sum();
        y.backward();
        assert_eq!(x.to_grad(), vec![2.0, 4.0, 6.0]);
    }

    #[test]
    fn backward_mean() {
        let x = Tensor::leaf(1, 4, vec![0.3, -1.0, 2.0, 5.5]);
        x.mean().backward();
        assert_eq!(x.to_grad(), vec![0.25; 4]);
    }

    #[test]
    fn backward_accumulates_additively() {
        let x = Tensor::leaf(1, 2, vec![1.0, -2.0]);
        let y = x.square().sum();
        y.backward();
        y.backward();
        assert_eq!(x.to_grad(), vec![4.0, -8.0]);
    }

    #[test]
    fn backward_is_linear() {
        // grad(alpha*f + beta*g) == alpha*grad f + beta*grad g
        let x0 = vec![0.7, -0.3, 1.2];
        let (alpha, beta) = (2.5, -0.75);

        let grad_of = |build: &dyn Fn(&Tensor) -> Tensor| -> Vec<f64> {
            let x = Tensor::leaf(1, 3, x0.clone());
            build(&x).backward();
            x.to_grad()
        };
        let f = |x: &Tensor| x.square().sum();
        let g = |x: &Tensor| x.exp().mean();
        let gf = grad_of(&f);
        let gg = grad_of(&g);
        let combined = grad_of(&|x: &Tensor| f(x).scale(alpha).add(&g(x).scale(beta)));
        for i in 0..3 {
            assert!((combined[i] - (alpha * gf[i] + beta * gg[i])).abs() < 1e-10);
        }
    }

    #[test]
    fn logistic_regression_grad_matches_finite_differences() {
        // 5 samples, 3 features, fixed pseudo-random values.
        let xs = vec![
            0.2, -0.4, 0.9, 1.1, 0.3, -0.7, -0.2, 0.8, 0.1, 0.5, -0.9, 0.4, -0.3, 0.6, -0.1,
        ];
        let ys = vec![1.0, 0.0, 1.0, 0.0, 1.0];
        let x = Tensor::constant(5, 3, xs);
        let y = Tensor::constant(5, 1, ys);
        let loss = |w: &Tensor| {
            let p = x.matmul(w).sigmoid();
            let ones = Tensor::constant(5, 1, vec![1.0; 5]);
            let pos = y.mul(&p.ln());
            let neg = ones.sub(&y).mul(&ones.sub(&p).ln());
            pos.add(&neg).mean().neg()
        };
        let w0 = vec![0.3, -0.5, 0.8];
        let report = grad_check(loss, &w0, 3, 1, 1e-5, 1e-4).unwrap();
        assert!(report.passed(), "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn broadcast_add_backward() {
        let report = grad_check(
            |b| {
                let x = Tensor::constant(3, 2, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
                x.add(b).square().sum()
            },
            &[0.4, -0.2],
            1,
            2,
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.passed(), "{}", report.max_rel_err);
    }

    #[test]
    fn concat_and_transpose_backward() {
        let report = grad_check(
            |x| {
                let c = Tensor::constant(2, 1, vec![1.5, -0.5]);
                let joined = Tensor::concat_cols(&[x, &c]);
                joined.transpose().matmul(&joined).sum()
            },
            &[0.3, 0.7],
            2,
            1,
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.passed(), "{}", report.max_rel_err);
    }

    #[test]
    fn select_routes_gradients() {
        let mask = vec![true, false, true];
        let report = grad_check(
            |x| {
                let other = x.scale(3.0);
                Tensor::select(&mask, x, &other).sum()
            },
            &[0.1, 0.2, 0.3],
            1,
            3,
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.passed());

        let x = Tensor::leaf(1, 3, vec![0.1, 0.2, 0.3]);
        let y = Tensor::leaf(1, 3, vec![1.0, 1.0, 1.0]);
        Tensor::select(&mask, &x, &y).sum().backward();
        assert_eq!(x.to_grad(), vec![1.0, 0.0, 1.0]);
        assert_eq!(y.to_grad(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn detach_blocks_gradient() {
        let x = Tensor::leaf(1, 2, vec![1.0, 2.0]);
        let d = x.square().detach();
        let y = d.sum();
        assert!(!y.requires_grad());
        y.backward();
        assert_eq!(x.to_grad(), vec![0.0, 0.0]);
    }

    #[test]
    fn shared_subexpression_grad() {
        // y = sum(x*x + x), both uses of x accumulate.
        let x = Tensor::leaf(1, 2, vec![3.0, -1.0]);
        x.mul(&x).add(&x).sum().backward();
        assert_eq!(x.to_grad(), vec![7.0, -1.0]);
    }

    #[test]
    #[should_panic(expected = "matmul")]
    fn matmul_shape_mismatch_panics() {
        let a = Tensor::constant(2, 3, vec![0.0; 6]);
        let b = Tensor::constant(2, 3, vec![0.0; 6]);
        let _ = a.matmul(&b);
    }

    #[test]
    #[should_panic(expected = "backward: root must be scalar")]
    fn non_scalar_backward_panics() {
        let x = Tensor::leaf(1, 2, vec![1.0, 2.0]);
        x.square().backward();
    }

    #[test]
    fn ln_floor_behaviour() {
        let x = Tensor::constant(1, 2, vec![0.0, 1e-20]);
        let y = x.ln();
        let expect = LN_FLOOR.ln();
        assert_eq!(y.to_values(), vec![expect, expect]);
    }

    #[test]
    fn unary_ops_match_finite_differences() {
        // Points chosen away from kinks (relu/abs/clamp at 0, clamp at 1).
        let x0 = vec![0.31, -0.62, 0.87, -0.15];
        let cases: Vec<(&str, Box<dyn Fn(&Tensor) -> Tensor>)> = vec![
            ("exp", Box::new(|x: &Tensor| x.exp().sum())),
            ("square", Box::new(|x: &Tensor| x.square().sum())),
            ("abs", Box::new(|x: &Tensor| x.abs().sum())),
            ("tanh", Box::new(|x: &Tensor| x.tanh().sum())),
            ("sigmoid", Box::new(|x: &Tensor| x.sigmoid().sum())),
            ("relu", Box::new(|x: &Tensor| x.relu().sum())),
            ("leaky", Box::new(|x: &Tensor| x.leaky_relu(0.2).sum())),
            ("clamp", Box::new(|x: &Tensor| x.clamp(-0.5, 0.5).square().sum())),
            ("affine", Box::new(|x: &Tensor| x.affine(2.5, -1.0).square().sum())),
            ("rowsums", Box::new(|x: &Tensor| x.row_sums().square().sum())),
        ];
        for (name, f) in cases {
            let report = grad_check(f.as_ref(), &x0, 2, 2, 1e-5, 1e-4).unwrap();
            assert!(report.passed(), "{name}: rel err {}", report.max_rel_err);
        }
    }

    #[test]
    fn powf_grad() {
        let report = grad_check(
            |x| x.powf_const(3.0).sum(),
            &[0.4, 1.7, 0.9],
            1,
            3,
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.passed());
    }

    #[test]
    fn forward_values_are_deterministic() {
        let build = || {
            let x = Tensor::constant(2, 2, vec![0.1, 0.2, 0.3, 0.4]);
            let w = Tensor::constant(2, 2, vec![-0.5, 1.0, 0.25, 2.0]);
            x.matmul(&w).tanh().mean().item()
        };
        let a = build();
        let b = build();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn grad_check_rejects_bad_step() {
        let r = grad_check(|x| x.sum(), &[1.0], 1, 1, 0.0, 1e-4);
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn mean_matches_manual() {
        let x = Tensor::constant(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        assert_relative_eq!(x.mean().item(), 2.5);
    }
}
