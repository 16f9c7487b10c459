//! Reverse-mode differentiation over a Wengert tape.
//!
//! The tape is define-by-run: every operation records its value and the
//! ids of its parents, and `backward` replays the list in reverse. Ids
//! are append-only indices, so parents always precede their children.
//! A tape owns a seeded generator; any noise a forward pass needs is
//! drawn from it, which makes replay with the same seed bit-identical.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;
use crate::rng::rng_from_seed;

/// Index of a node on its tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    /// Position on the tape; parents always have a smaller index.
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryKind {
    Relu,
    Softplus,
    Tanh,
    Sigmoid,
    Exp,
    Log,
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Affine { w: NodeId, x: NodeId, b: NodeId },
    Unary { kind: UnaryKind, a: NodeId },
    Binary { kind: BinaryKind, a: NodeId, b: NodeId },
    Concat { a: NodeId, b: NodeId },
    LogSoftmax { a: NodeId },
    Sum { a: NodeId },
    Select { a: NodeId, row: usize },
    AddConst { a: NodeId },
    MulConst { a: NodeId, c: f64 },
}

struct Node {
    value: Arc<Matrix>,
    grad: Option<Matrix>,
    op: Op,
}

pub struct Tape {
    nodes: Vec<Node>,
    rng: ChaCha8Rng,
    seed: u64,
}

impl Tape {
    pub fn new(seed: u64) -> Self {
        Tape {
            nodes: Vec::new(),
            rng: rng_from_seed(seed),
            seed,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> NodeId {
        self.push_shared(Arc::new(value), op)
    }

    fn push_shared(&mut self, value: Arc<Matrix>, op: Op) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            value,
            grad: None,
            op,
        });
        id
    }

    /// New differentiable leaf holding `value`.
    pub fn leaf(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// Leaf that shares storage with the caller (used for parameters).
    pub fn shared_leaf(&mut self, value: Arc<Matrix>) -> NodeId {
        self.push_shared(value, Op::Leaf)
    }

    /// Constant column vector of standard normal draws from the tape rng.
    pub fn standard_normal(&mut self, dim: usize) -> NodeId {
        let data: Vec<f64> = (0..dim)
            .map(|_| StandardNormal.sample(&mut self.rng))
            .collect();
        self.leaf(Matrix::column(&data))
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    /// Value of a 1x1 node.
    pub fn scalar_value(&self, id: NodeId) -> f64 {
        debug_assert!(self.value(id).is_scalar());
        self.value(id).as_slice()[0]
    }

    /// Ids of the operands the node was produced from.
    pub fn parents(&self, id: NodeId) -> Vec<NodeId> {
        match self.nodes[id.0].op {
            Op::Leaf => vec![],
            Op::Affine { w, x, b } => vec![w, x, b],
            Op::Unary { a, .. }
            | Op::LogSoftmax { a }
            | Op::Sum { a }
            | Op::Select { a, .. }
            | Op::AddConst { a }
            | Op::MulConst { a, .. } => vec![a],
            Op::Binary { a, b, .. } | Op::Concat { a, b } => vec![a, b],
        }
    }

    /// `W*x + b` for `W: m x n`, `x: n x 1`, `b: m x 1`.
    pub fn affine(&mut self, w: NodeId, x: NodeId, b: NodeId) -> Result<NodeId> {
        let wv = self.value(w);
        let xv = self.value(x);
        let bv = self.value(b);
        if !xv.is_column() || wv.cols() != xv.rows() {
            return Err(Error::shape("affine", wv.shape_str(), xv.shape_str()));
        }
        if bv.shape() != (wv.rows(), 1) {
            return Err(Error::shape("affine", wv.shape_str(), bv.shape_str()));
        }
        let mut out = wv.matvec(xv)?;
        for (o, &bi) in out.as_mut_slice().iter_mut().zip(bv.as_slice()) {
            *o += bi;
        }
        Ok(self.push(out, Op::Affine { w, x, b }))
    }

    pub fn unary(&mut self, kind: UnaryKind, a: NodeId) -> Result<NodeId> {
        let av = self.value(a);
        if kind == UnaryKind::Log {
            if let Some(v) = av.as_slice().iter().find(|v| **v <= 0.0) {
                return Err(Error::Domain {
                    op: "log",
                    msg: format!("non-positive input {v}"),
                });
            }
        }
        let out = av.map(|v| apply_unary(kind, v));
        Ok(self.push(out, Op::Unary { kind, a }))
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(UnaryKind::Relu, a)
    }

    pub fn softplus(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(UnaryKind::Softplus, a)
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(UnaryKind::Tanh, a)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(UnaryKind::Sigmoid, a)
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(UnaryKind::Exp, a)
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(UnaryKind::Log, a)
    }

    pub fn neg(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(UnaryKind::Neg, a)
    }

    pub fn binary(&mut self, kind: BinaryKind, a: NodeId, b: NodeId) -> Result<NodeId> {
        let av = self.value(a);
        let bv = self.value(b);
        let out = match kind {
            BinaryKind::Add => av.add(bv)?,
            BinaryKind::Sub => av.sub(bv)?,
            BinaryKind::Mul => av.hadamard(bv)?,
            BinaryKind::Div => {
                if av.shape() != bv.shape() {
                    return Err(Error::shape("div", av.shape_str(), bv.shape_str()));
                }
                let mut out = av.clone();
                for (o, &d) in out.as_mut_slice().iter_mut().zip(bv.as_slice()) {
                    *o /= d;
                }
                out
            }
        };
        Ok(self.push(out, Op::Binary { kind, a, b }))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(BinaryKind::Mul, a, b)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(BinaryKind::Div, a, b)
    }

    /// Elementwise `a + c` for a plain constant.
    pub fn add_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let out = self.value(a).map(|v| v + c);
        self.push(out, Op::AddConst { a })
    }

    /// Elementwise `a * c` for a plain constant.
    pub fn mul_const(&mut self, a: NodeId, c: f64) -> NodeId {
        let out = self.value(a).map(|v| v * c);
        self.push(out, Op::MulConst { a, c })
    }

    /// Stacks two column vectors.
    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let av = self.value(a);
        let bv = self.value(b);
        if !av.is_column() || !bv.is_column() {
            return Err(Error::shape("concat", av.shape_str(), bv.shape_str()));
        }
        let mut data = Vec::with_capacity(av.len() + bv.len());
        data.extend_from_slice(av.as_slice());
        data.extend_from_slice(bv.as_slice());
        Ok(self.push(Matrix::column(&data), Op::Concat { a, b }))
    }

    /// Numerically stable `x - max(x) - ln(sum(exp(x - max(x))))`.
    pub fn log_softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let av = self.value(a);
        if !av.is_column() || av.is_empty() {
            return Err(Error::shape("log_softmax", av.shape_str(), "nonempty column"));
        }
        let max = av.as_slice().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = av
            .as_slice()
            .iter()
            .map(|v| (v - max).exp())
            .sum::<f64>()
            .ln();
        let out = av.map(|v| v - max - lse);
        Ok(self.push(out, Op::LogSoftmax { a }))
    }

    /// Sum of all entries; yields a 1x1 node.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let total: f64 = self.value(a).as_slice().iter().sum();
        self.push(Matrix::scalar(total), Op::Sum { a })
    }

    /// Picks one entry of a column vector as a 1x1 node.
    pub fn select(&mut self, a: NodeId, row: usize) -> Result<NodeId> {
        let av = self.value(a);
        if !av.is_column() {
            return Err(Error::shape("select", av.shape_str(), "column"));
        }
        if row >= av.rows() {
            return Err(Error::Contract(format!(
                "select index {row} out of range for vector of length {}",
                av.rows()
            )));
        }
        let v = av.as_slice()[row];
        Ok(self.push(Matrix::scalar(v), Op::Select { a, row }))
    }

    fn grad_buf(&mut self, id: NodeId) -> &mut Matrix {
        let shape = self.nodes[id.0].value.shape();
        self.nodes[id.0]
            .grad
            .get_or_insert_with(|| Matrix::zeros(shape.0, shape.1))
    }

    /// Accumulates `d root / d node` into every node reachable from `root`.
    ///
    /// `root` must be 1x1. Nodes not on a path to the root keep a zero
    /// gradient.
    pub fn backward(&mut self, root: NodeId) -> Result<()> {
        if !self.value(root).is_scalar() {
            return Err(Error::Contract(format!(
                "backward root must be scalar, got {}",
                self.value(root).shape_str()
            )));
        }
        self.grad_buf(root).fill(1.0);
        for i in (0..=root.0).rev() {
            if self.nodes[i].grad.is_none() {
                continue;
            }
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf => {}
                Op::Affine { w, x, b } => {
                    let g = self.nodes[i].grad.take().expect("grad present");
                    let wv = Arc::clone(&self.nodes[w.0].value);
                    let xv = Arc::clone(&self.nodes[x.0].value);
                    self.grad_buf(w).add_outer(g.as_slice(), xv.as_slice());
                    wv.add_transposed_matvec(g.as_slice(), self.grad_buf(x).as_mut_slice());
                    self.grad_buf(b).axpy(1.0, &g);
                    self.nodes[i].grad = Some(g);
                }
                Op::Unary { kind, a } => {
                    let g = self.nodes[i].grad.take().expect("grad present");
                    let local: Matrix = {
                        let av = &self.nodes[a.0].value;
                        let ov = &self.nodes[i].value;
                        match kind {
                            UnaryKind::Relu => av.map(|v| if v > 0.0 { 1.0 } else { 0.0 }),
                            UnaryKind::Softplus => av.map(sigmoid_stable),
                            UnaryKind::Tanh => ov.map(|o| 1.0 - o * o),
                            UnaryKind::Sigmoid => ov.map(|o| o * (1.0 - o)),
                            UnaryKind::Exp => ov.map(|o| o),
                            UnaryKind::Log => av.map(|v| 1.0 / v),
                            UnaryKind::Neg => av.map(|_| -1.0),
                        }
                    };
                    let contrib = g.hadamard(&local).expect("same shape");
                    self.grad_buf(a).axpy(1.0, &contrib);
                    self.nodes[i].grad = Some(g);
                }
                Op::Binary { kind, a, b } => {
                    let g = self.nodes[i].grad.take().expect("grad present");
                    match kind {
                        BinaryKind::Add => {
                            self.grad_buf(a).axpy(1.0, &g);
                            self.grad_buf(b).axpy(1.0, &g);
                        }
                        BinaryKind::Sub => {
                            self.grad_buf(a).axpy(1.0, &g);
                            self.grad_buf(b).axpy(-1.0, &g);
                        }
                        BinaryKind::Mul => {
                            let av = Arc::clone(&self.nodes[a.0].value);
                            let bv = Arc::clone(&self.nodes[b.0].value);
                            self.grad_buf(a)
                                .axpy(1.0, &g.hadamard(&bv).expect("same shape"));
                            self.grad_buf(b)
                                .axpy(1.0, &g.hadamard(&av).expect("same shape"));
                        }
                        BinaryKind::Div => {
                            let bv = Arc::clone(&self.nodes[b.0].value);
                            let ov = Arc::clone(&self.nodes[i].value);
                            let mut da = g.clone();
                            for (d, &den) in da.as_mut_slice().iter_mut().zip(bv.as_slice()) {
                                *d /= den;
                            }
                            self.grad_buf(a).axpy(1.0, &da);
                            let mut db = g.hadamard(&ov).expect("same shape");
                            for (d, &den) in db.as_mut_slice().iter_mut().zip(bv.as_slice()) {
                                *d = -*d / den;
                            }
                            self.grad_buf(b).axpy(1.0, &db);
                        }
                    }
                    self.nodes[i].grad = Some(g);
                }
                Op::Concat { a, b } => {
                    let g = self.nodes[i].grad.take().expect("grad present");
                    let na = self.nodes[a.0].value.len();
                    let ga = Matrix::column(&g.as_slice()[..na]);
                    let gb = Matrix::column(&g.as_slice()[na..]);
                    self.grad_buf(a).axpy(1.0, &ga);
                    self.grad_buf(b).axpy(1.0, &gb);
                    self.nodes[i].grad = Some(g);
                }
                Op::LogSoftmax { a } => {
                    let g = self.nodes[i].grad.take().expect("grad present");
                    let gsum: f64 = g.as_slice().iter().sum();
                    let ov = Arc::clone(&self.nodes[i].value);
                    let acc = self.grad_buf(a);
                    for ((d, &gi), &oi) in acc
                        .as_mut_slice()
                        .iter_mut()
                        .zip(g.as_slice())
                        .zip(ov.as_slice())
                    {
                        *d += gi - oi.exp() * gsum;
                    }
                    self.nodes[i].grad = Some(g);
                }
                Op::Sum { a } => {
                    let g = self.nodes[i].grad.as_ref().expect("grad present").as_slice()[0];
                    let acc = self.grad_buf(a);
                    for d in acc.as_mut_slice() {
                        *d += g;
                    }
                }
                Op::Select { a, row } => {
                    let g = self.nodes[i].grad.as_ref().expect("grad present").as_slice()[0];
                    let acc = self.grad_buf(a);
                    acc.as_mut_slice()[row] += g;
                }
                Op::AddConst { a } => {
                    let g = self.nodes[i].grad.take().expect("grad present");
                    self.grad_buf(a).axpy(1.0, &g);
                    self.nodes[i].grad = Some(g);
                }
                Op::MulConst { a, c } => {
                    let g = self.nodes[i].grad.take().expect("grad present");
                    self.grad_buf(a).axpy(c, &g);
                    self.nodes[i].grad = Some(g);
                }
            }
        }
        Ok(())
    }

    /// Gradient of the last `backward` root with respect to `id`.
    /// Unreached nodes report zeros.
    pub fn grad(&self, id: NodeId) -> Matrix {
        match &self.nodes[id.0].grad {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.nodes[id.0].value.shape();
                Matrix::zeros(r, c)
            }
        }
    }

    pub fn grad_ref(&self, id: NodeId) -> Option<&Matrix> {
        self.nodes[id.0].grad.as_ref()
    }

    /// `acc += grad(id)`, skipping the copy when the node was unreached.
    pub fn fold_grad_into(&self, id: NodeId, acc: &mut Matrix) {
        if let Some(g) = &self.nodes[id.0].grad {
            acc.axpy(1.0, g);
        }
    }
}

fn apply_unary(kind: UnaryKind, v: f64) -> f64 {
    match kind {
        UnaryKind::Relu => v.max(0.0),
        UnaryKind::Softplus => v.max(0.0) + (-v.abs()).exp().ln_1p(),
        UnaryKind::Tanh => v.tanh(),
        UnaryKind::Sigmoid => sigmoid_stable(v),
        UnaryKind::Exp => v.exp(),
        UnaryKind::Log => v.ln(),
        UnaryKind::Neg => -v,
    }
}

fn sigmoid_stable(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}
