//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Tape`] is built fresh for every forward pass. Inputs enter either as
//! tracked leaves ([`Tape::leaf`]) or as constants ([`Tape::constant`]);
//! every operation on a [`Var`] appends a node whose inputs precede it, so
//! the node list is already in topological order. [`Tape::backward`] walks
//! that list once in reverse and returns the accumulated [`Gradients`].
//!
//! ```
//! use cmc::{Tape, Tensor};
//!
//! let tape = Tape::new();
//! let x = tape.leaf(Tensor::scalar(3.0));
//! let y = x.mul(x).unwrap();
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(grads.wrt(x).unwrap().data(), &[6.0]);
//! ```

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{shape_err, Error, Result};
use crate::tensor::{dot, matmul_into, Tensor};

/// Row norms at or below this value are rejected by [`Var::l2_normalize`].
pub const NORM_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Shift(usize),
    AddRowBias(usize, usize),
    MatMul(usize, usize),
    Transpose(usize),
    Exp(usize),
    Log(usize),
    Relu(usize),
    Softplus(usize),
    Abs(usize),
    Sum(usize),
    Mean(usize),
    L2Normalize(usize, Rc<Vec<f64>>),
    LogSoftmaxNll {
        input: usize,
        targets: Rc<Vec<usize>>,
        probs: Rc<Vec<f64>>,
    },
    ConcatCols(Vec<usize>),
    RowDot(usize, usize),
    BatchRowDot(usize, usize),
    SelectMid(usize, usize),
    Reshape(usize),
    GatherRows(usize, Rc<Vec<usize>>),
}

impl Op {
    fn inputs(&self) -> Vec<usize> {
        use Op::*;
        match self {
            Leaf => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) | AddRowBias(a, b) | MatMul(a, b) | RowDot(a, b)
            | BatchRowDot(a, b) => vec![*a, *b],
            Scale(a, _) | Shift(a) | Transpose(a) | Exp(a) | Log(a) | Relu(a) | Softplus(a)
            | Abs(a) | Sum(a) | Mean(a) | L2Normalize(a, _) | SelectMid(a, _) | Reshape(a)
            | GatherRows(a, _) => {
                vec![*a]
            }
            LogSoftmaxNll { input, .. } => vec![*input],
            ConcatCols(xs) => xs.clone(),
        }
    }
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    needs_grad: bool,
}

/// Records operations for one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

/// Gradients produced by [`Tape::backward`], indexed by node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the root with respect to `var`, if `var` was tracked and
    /// reachable from the root.
    pub fn wrt(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A tracked input; gradients flow to it.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(Rc::new(value), Op::Leaf, true)
    }

    /// An untracked input.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(Rc::new(value), Op::Leaf, false)
    }

    /// Untracked input that shares an existing buffer.
    pub fn constant_rc(&self, value: Rc<Tensor>) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    fn push(&self, value: Rc<Tensor>, op: Op, leaf_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let needs_grad = match op {
            Op::Leaf => leaf_grad,
            ref other => other.inputs().iter().any(|&i| nodes[i].needs_grad),
        };
        nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value_of(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    /// Propagates d(root)/d(node) to every tracked node reachable from a
    /// scalar `root`. Contributions from fan-out are summed.
    pub fn backward(&self, root: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        if !nodes[root.id].value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar root, got shape {:?}",
                nodes[root.id].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[root.id] = Some(vec![1.0]);

        for id in (0..=root.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.needs_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                grads[id] = Some(g);
                continue;
            }
            let want = |i: usize| nodes[i].needs_grad;
            let val = |i: usize| nodes[i].value.as_ref();
            let acc = |i: usize, contrib: Vec<f64>, grads: &mut Vec<Option<Vec<f64>>>| {
                match &mut grads[i] {
                    Some(existing) => {
                        for (e, c) in existing.iter_mut().zip(contrib) {
                            *e += c;
                        }
                    }
                    slot @ None => *slot = Some(contrib),
                }
            };

            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    if want(*a) {
                        acc(*a, g.clone(), &mut grads);
                    }
                    if want(*b) {
                        acc(*b, g.clone(), &mut grads);
                    }
                }
                Op::Sub(a, b) => {
                    if want(*a) {
                        acc(*a, g.clone(), &mut grads);
                    }
                    if want(*b) {
                        acc(*b, g.iter().map(|v| -v).collect(), &mut grads);
                    }
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (val(*a).data(), val(*b).data());
                    if want(*a) {
                        acc(*a, g.iter().zip(vb).map(|(g, y)| g * y).collect(), &mut grads);
                    }
                    if want(*b) {
                        acc(*b, g.iter().zip(va).map(|(g, x)| g * x).collect(), &mut grads);
                    }
                }
                Op::Scale(a, s) => {
                    if want(*a) {
                        acc(*a, g.iter().map(|v| v * s).collect(), &mut grads);
                    }
                }
                Op::Shift(a) | Op::Reshape(a) => {
                    if want(*a) {
                        acc(*a, g, &mut grads);
                    }
                }
                Op::AddRowBias(x, b) => {
                    if want(*b) {
                        let m = val(*b).len();
                        let mut gb = vec![0.0; m];
                        for row in g.chunks(m) {
                            for (acc, v) in gb.iter_mut().zip(row) {
                                *acc += v;
                            }
                        }
                        acc(*b, gb, &mut grads);
                    }
                    if want(*x) {
                        acc(*x, g, &mut grads);
                    }
                }
                Op::MatMul(a, b) => {
                    let (ta, tb) = (val(*a), val(*b));
                    let (n, k, m) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                    if want(*a) {
                        // d a = g · bᵀ
                        let mut ga = vec![0.0; n * k];
                        for i in 0..n {
                            let grow = &g[i * m..(i + 1) * m];
                            for p in 0..k {
                                ga[i * k + p] = dot(grow, &tb.data()[p * m..(p + 1) * m]);
                            }
                        }
                        acc(*a, ga, &mut grads);
                    }
                    if want(*b) {
                        // d b = aᵀ · g
                        let mut gb = vec![0.0; k * m];
                        for i in 0..n {
                            let grow = &g[i * m..(i + 1) * m];
                            for p in 0..k {
                                let aip = ta.data()[i * k + p];
                                if aip == 0.0 {
                                    continue;
                                }
                                for (o, gv) in gb[p * m..(p + 1) * m].iter_mut().zip(grow) {
                                    *o += aip * gv;
                                }
                            }
                        }
                        acc(*b, gb, &mut grads);
                    }
                }
                Op::Transpose(a) => {
                    if want(*a) {
                        let t = val(*a);
                        let (n, m) = (t.shape()[0], t.shape()[1]);
                        let mut ga = vec![0.0; n * m];
                        for i in 0..n {
                            for j in 0..m {
                                ga[i * m + j] = g[j * n + i];
                            }
                        }
                        acc(*a, ga, &mut grads);
                    }
                }
                Op::Exp(a) => {
                    if want(*a) {
                        let out = node.value.data();
                        acc(*a, g.iter().zip(out).map(|(g, y)| g * y).collect(), &mut grads);
                    }
                }
                Op::Log(a) => {
                    if want(*a) {
                        let x = val(*a).data();
                        acc(*a, g.iter().zip(x).map(|(g, x)| g / x).collect(), &mut grads);
                    }
                }
                Op::Relu(a) => {
                    if want(*a) {
                        let x = val(*a).data();
                        acc(
                            *a,
                            g.iter()
                                .zip(x)
                                .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                                .collect(),
                            &mut grads,
                        );
                    }
                }
                Op::Softplus(a) => {
                    if want(*a) {
                        let x = val(*a).data();
                        acc(
                            *a,
                            g.iter().zip(x).map(|(g, &x)| g * sigmoid(x)).collect(),
                            &mut grads,
                        );
                    }
                }
                Op::Abs(a) => {
                    if want(*a) {
                        let x = val(*a).data();
                        acc(
                            *a,
                            g.iter()
                                .zip(x)
                                .map(|(g, &x)| {
                                    if x > 0.0 {
                                        *g
                                    } else if x < 0.0 {
                                        -*g
                                    } else {
                                        0.0
                                    }
                                })
                                .collect(),
                            &mut grads,
                        );
                    }
                }
                Op::Sum(a) => {
                    if want(*a) {
                        acc(*a, vec![g[0]; val(*a).len()], &mut grads);
                    }
                }
                Op::Mean(a) => {
                    if want(*a) {
                        let n = val(*a).len();
                        acc(*a, vec![g[0] / n as f64; n], &mut grads);
                    }
                }
                Op::L2Normalize(a, norms) => {
                    if want(*a) {
                        // dx = (g - y (y·g)) / |x|
                        let y = node.value.as_ref();
                        let d = y.cols();
                        let mut ga = vec![0.0; y.len()];
                        for (i, &nrm) in norms.iter().enumerate() {
                            let yr = y.row(i);
                            let gr = &g[i * d..(i + 1) * d];
                            let yg = dot(yr, gr);
                            for j in 0..d {
                                ga[i * d + j] = (gr[j] - yr[j] * yg) / nrm;
                            }
                        }
                        acc(*a, ga, &mut grads);
                    }
                }
                Op::LogSoftmaxNll {
                    input,
                    targets,
                    probs,
                } => {
                    if want(*input) {
                        let n = targets.len();
                        let c = probs.len() / n;
                        let scale = g[0] / n as f64;
                        let mut ga: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                        for (i, &t) in targets.iter().enumerate() {
                            ga[i * c + t] -= scale;
                        }
                        acc(*input, ga, &mut grads);
                    }
                }
                Op::ConcatCols(parts) => {
                    let n = node.value.rows();
                    let total = node.value.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let w = val(p).cols();
                        if want(p) {
                            let mut gp = Vec::with_capacity(n * w);
                            for i in 0..n {
                                gp.extend_from_slice(&g[i * total + offset..i * total + offset + w]);
                            }
                            acc(p, gp, &mut grads);
                        }
                        offset += w;
                    }
                }
                Op::RowDot(a, b) => {
                    let (ta, tb) = (val(*a), val(*b));
                    let d = ta.cols();
                    if want(*a) {
                        let ga = (0..ta.len()).map(|idx| g[idx / d] * tb.data()[idx]).collect();
                        acc(*a, ga, &mut grads);
                    }
                    if want(*b) {
                        let gb = (0..tb.len()).map(|idx| g[idx / d] * ta.data()[idx]).collect();
                        acc(*b, gb, &mut grads);
                    }
                }
                Op::BatchRowDot(a, c) => {
                    let (ta, tc) = (val(*a), val(*c));
                    let n = ta.rows();
                    let d = ta.cols();
                    let k = tc.shape()[1];
                    if want(*a) {
                        let mut ga = vec![0.0; n * d];
                        for i in 0..n {
                            let gar = &mut ga[i * d..(i + 1) * d];
                            for j in 0..k {
                                let gij = g[i * k + j];
                                let crow = &tc.data()[(i * k + j) * d..(i * k + j + 1) * d];
                                for (o, cv) in gar.iter_mut().zip(crow) {
                                    *o += gij * cv;
                                }
                            }
                        }
                        acc(*a, ga, &mut grads);
                    }
                    if want(*c) {
                        let mut gc = vec![0.0; tc.len()];
                        for i in 0..n {
                            let ar = ta.row(i);
                            for j in 0..k {
                                let gij = g[i * k + j];
                                let base = (i * k + j) * d;
                                for (o, av) in gc[base..base + d].iter_mut().zip(ar) {
                                    *o = gij * av;
                                }
                            }
                        }
                        acc(*c, gc, &mut grads);
                    }
                }
                Op::GatherRows(a, rows) => {
                    if want(*a) {
                        let t = val(*a);
                        let c = t.cols();
                        let mut ga = vec![0.0; t.len()];
                        for (slot, &r) in rows.iter().enumerate() {
                            for (o, v) in ga[r * c..(r + 1) * c].iter_mut().zip(&g[slot * c..(slot + 1) * c]) {
                                *o += v;
                            }
                        }
                        acc(*a, ga, &mut grads);
                    }
                }
                Op::SelectMid(a, pos) => {
                    if want(*a) {
                        let t = val(*a);
                        let (n, gsz, d) = (t.shape()[0], t.shape()[1], t.shape()[2]);
                        let mut ga = vec![0.0; t.len()];
                        for i in 0..n {
                            let base = (i * gsz + pos) * d;
                            ga[base..base + d].copy_from_slice(&g[i * d..(i + 1) * d]);
                        }
                        acc(*a, ga, &mut grads);
                    }
                }
            }
        }

        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(id, g)| {
                g.map(|g| {
                    Tensor::new(nodes[id].value.shape().to_vec(), g)
                        .expect("gradient buffer matches node shape")
                })
            })
            .collect();
        Ok(Gradients { grads })
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(shape_err(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn require_2d(op: &'static str, t: &Tensor) -> Result<()> {
    if t.ndim() != 2 {
        return Err(shape_err(op, format!("expected a 2-D tensor, got {:?}", t.shape())));
    }
    Ok(())
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    /// Value of a scalar node.
    pub fn item(&self) -> Result<f64> {
        self.value().item()
    }

    fn unary(self, op: Op, f: impl Fn(f64) -> f64) -> Var<'t> {
        let v = self.value();
        let out = Tensor::new(v.shape().to_vec(), v.data().iter().map(|&x| f(x)).collect())
            .expect("same shape");
        self.tape.push(Rc::new(out), op, false)
    }

    fn zip(self, other: Var<'t>, op_name: &'static str, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        same_shape(op_name, &a, &b)?;
        let out = Tensor::new(
            a.shape().to_vec(),
            a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
        )?;
        Ok(self.tape.push(Rc::new(out), op, false))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.zip(other, "add", Op::Add(self.id, other.id), |x, y| x + y)
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.zip(other, "sub", Op::Sub(self.id, other.id), |x, y| x - y)
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.zip(other, "mul", Op::Mul(self.id, other.id), |x, y| x * y)
    }

    pub fn scale(self, s: f64) -> Var<'t> {
        self.unary(Op::Scale(self.id, s), |x| x * s)
    }

    /// Adds a constant to every element.
    pub fn shift(self, c: f64) -> Var<'t> {
        self.unary(Op::Shift(self.id), |x| x + c)
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(Op::Exp(self.id), f64::exp)
    }

    pub fn log(self) -> Var<'t> {
        self.unary(Op::Log(self.id), f64::ln)
    }

    pub fn relu(self) -> Var<'t> {
        self.unary(Op::Relu(self.id), |x| x.max(0.0))
    }

    /// `ln(1 + eˣ)`, evaluated without overflow.
    pub fn softplus(self) -> Var<'t> {
        self.unary(Op::Softplus(self.id), softplus)
    }

    pub fn abs(self) -> Var<'t> {
        self.unary(Op::Abs(self.id), f64::abs)
    }

    pub fn square(self) -> Var<'t> {
        self.mul(self).expect("same shape")
    }

    pub fn sum(self) -> Var<'t> {
        let s: f64 = self.value().data().iter().sum();
        self.tape.push(Rc::new(Tensor::scalar(s)), Op::Sum(self.id), false)
    }

    pub fn mean(self) -> Var<'t> {
        let v = self.value();
        let s = v.data().iter().sum::<f64>() / v.len() as f64;
        self.tape.push(Rc::new(Tensor::scalar(s)), Op::Mean(self.id), false)
    }

    /// `[n×k] · [k×m] → [n×m]`.
    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        if a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0] {
            return Err(shape_err(
                "matmul",
                format!("{:?} · {:?}", a.shape(), b.shape()),
            ));
        }
        let (n, k, m) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let mut out = vec![0.0; n * m];
        matmul_into(a.data(), b.data(), &mut out, n, k, m);
        Ok(self.tape.push(
            Rc::new(Tensor::matrix(n, m, out)?),
            Op::MatMul(self.id, other.id),
            false,
        ))
    }

    pub fn transpose(self) -> Result<Var<'t>> {
        let out = self.value().transpose()?;
        Ok(self.tape.push(Rc::new(out), Op::Transpose(self.id), false))
    }

    /// `[n×m] + b[m]` broadcast over rows.
    pub fn add_row_bias(self, bias: Var<'t>) -> Result<Var<'t>> {
        let (x, b) = (self.value(), bias.value());
        require_2d("add_row_bias", &x)?;
        if b.len() != x.cols() {
            return Err(shape_err(
                "add_row_bias",
                format!("{:?} + bias {:?}", x.shape(), b.shape()),
            ));
        }
        let mut out = x.data().to_vec();
        for row in out.chunks_mut(b.len()) {
            for (o, bv) in row.iter_mut().zip(b.data()) {
                *o += bv;
            }
        }
        Ok(self.tape.push(
            Rc::new(Tensor::new(x.shape().to_vec(), out)?),
            Op::AddRowBias(self.id, bias.id),
            false,
        ))
    }

    /// Scales each row of `[n×d]` to unit Euclidean norm.
    pub fn l2_normalize(self) -> Result<Var<'t>> {
        let x = self.value();
        require_2d("l2_normalize", &x)?;
        let d = x.cols();
        let mut norms = Vec::with_capacity(x.rows());
        let mut out = Vec::with_capacity(x.len());
        for i in 0..x.rows() {
            let nrm = x.row_norm(i);
            if nrm.is_nan() || nrm <= NORM_EPS {
                return Err(Error::DegenerateEmbedding { row: i, norm: nrm });
            }
            norms.push(nrm);
            out.extend(x.row(i).iter().map(|v| v / nrm));
        }
        debug_assert_eq!(out.len(), x.rows() * d);
        Ok(self.tape.push(
            Rc::new(Tensor::new(x.shape().to_vec(), out)?),
            Op::L2Normalize(self.id, Rc::new(norms)),
            false,
        ))
    }

    /// Mean over rows of `-log softmax(logits)[target]`.
    pub fn log_softmax_nll(self, targets: &[usize]) -> Result<Var<'t>> {
        let x = self.value();
        require_2d("log_softmax_nll", &x)?;
        let (n, c) = (x.rows(), x.cols());
        if targets.len() != n {
            return Err(shape_err(
                "log_softmax_nll",
                format!("{n} rows but {} targets", targets.len()),
            ));
        }
        let mut probs = Vec::with_capacity(n * c);
        let mut total = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            if t >= c {
                return Err(Error::Index {
                    op: "log_softmax_nll",
                    index: t,
                    bound: c,
                });
            }
            let row = x.row(i);
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let se: f64 = row.iter().map(|v| (v - mx).exp()).sum();
            let lse = mx + se.ln();
            total += lse - row[t];
            probs.extend(row.iter().map(|v| (v - lse).exp()));
        }
        Ok(self.tape.push(
            Rc::new(Tensor::scalar(total / n as f64)),
            Op::LogSoftmaxNll {
                input: self.id,
                targets: Rc::new(targets.to_vec()),
                probs: Rc::new(probs),
            },
            false,
        ))
    }

    /// Concatenates 2-D tensors with equal row counts along the feature axis.
    pub fn concat_cols(parts: &[Var<'t>]) -> Result<Var<'t>> {
        let first = parts
            .first()
            .ok_or_else(|| shape_err("concat_cols", "nothing to concatenate"))?;
        let vals: Vec<Rc<Tensor>> = parts.iter().map(Var::value).collect();
        let n = vals[0].rows();
        for v in &vals {
            require_2d("concat_cols", v)?;
            if v.rows() != n {
                return Err(shape_err(
                    "concat_cols",
                    format!("row count {} vs {n}", v.rows()),
                ));
            }
        }
        let total: usize = vals.iter().map(|v| v.cols()).sum();
        let mut out = Vec::with_capacity(n * total);
        for i in 0..n {
            for v in &vals {
                out.extend_from_slice(v.row(i));
            }
        }
        Ok(first.tape.push(
            Rc::new(Tensor::matrix(n, total, out)?),
            Op::ConcatCols(parts.iter().map(|p| p.id).collect()),
            false,
        ))
    }

    /// Row-wise inner products: `[n×d] , [n×d] → [n×1]`.
    pub fn row_dot(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        require_2d("row_dot", &a)?;
        same_shape("row_dot", &a, &b)?;
        let out: Vec<f64> = (0..a.rows()).map(|i| dot(a.row(i), b.row(i))).collect();
        Ok(self.tape.push(
            Rc::new(Tensor::matrix(a.rows(), 1, out)?),
            Op::RowDot(self.id, other.id),
            false,
        ))
    }

    /// Each anchor row against its own candidate set:
    /// `[n×d] , [n×k×d] → [n×k]`.
    pub fn batch_row_dot(self, candidates: Var<'t>) -> Result<Var<'t>> {
        let (a, c) = (self.value(), candidates.value());
        require_2d("batch_row_dot", &a)?;
        if c.ndim() != 3 || c.shape()[0] != a.rows() || c.shape()[2] != a.cols() {
            return Err(shape_err(
                "batch_row_dot",
                format!("anchors {:?} vs candidates {:?}", a.shape(), c.shape()),
            ));
        }
        let (n, k, d) = (c.shape()[0], c.shape()[1], c.shape()[2]);
        let mut out = Vec::with_capacity(n * k);
        for i in 0..n {
            let ar = a.row(i);
            for j in 0..k {
                let base = (i * k + j) * d;
                out.push(dot(ar, &c.data()[base..base + d]));
            }
        }
        Ok(self.tape.push(
            Rc::new(Tensor::matrix(n, k, out)?),
            Op::BatchRowDot(self.id, candidates.id),
            false,
        ))
    }

    /// Picks position `pos` of the middle axis: `[n×g×d] → [n×d]`.
    pub fn select_mid(self, pos: usize) -> Result<Var<'t>> {
        let t = self.value();
        if t.ndim() != 3 {
            return Err(shape_err("select_mid", format!("expected 3-D, got {:?}", t.shape())));
        }
        let (n, g, d) = (t.shape()[0], t.shape()[1], t.shape()[2]);
        if pos >= g {
            return Err(Error::Index {
                op: "select_mid",
                index: pos,
                bound: g,
            });
        }
        let mut out = Vec::with_capacity(n * d);
        for i in 0..n {
            let base = (i * g + pos) * d;
            out.extend_from_slice(&t.data()[base..base + d]);
        }
        Ok(self.tape.push(
            Rc::new(Tensor::matrix(n, d, out)?),
            Op::SelectMid(self.id, pos),
            false,
        ))
    }

    /// Rows (first-axis slices) at `rows`, repeats allowed.
    pub fn gather_rows(self, rows: &[usize]) -> Result<Var<'t>> {
        let out = self.value().gather_rows(rows)?;
        Ok(self.tape.push(
            Rc::new(out),
            Op::GatherRows(self.id, Rc::new(rows.to_vec())),
            false,
        ))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>> {
        let out = self.value().as_ref().clone().reshape(shape)?;
        Ok(self.tape.push(Rc::new(out), Op::Reshape(self.id), false))
    }
}
