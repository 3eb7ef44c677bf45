//! Dense reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation of one forward pass as an append-only
//! list of nodes. Because a node can only refer to nodes recorded before it,
//! the expression graph is acyclic by construction and walking the tape
//! backwards is a valid reverse topological order.
//!
//! ```
//! use nalgebra::dmatrix;
//! use pinet::autodiff::Tape;
//!
//! let mut tape = Tape::new();
//! let w = tape.param(dmatrix![1.0, 2.0; 3.0, 4.0]);
//! let x = tape.constant(dmatrix![1.0; 1.0]);
//! let y = tape.matmul(w, x).unwrap();
//! let loss = tape.sum(y);
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(tape.value(loss)[(0, 0)], 10.0);
//! assert_eq!(grads.wrt(&tape, w), dmatrix![1.0, 1.0; 1.0, 1.0]);
//! ```
//!
//! Tapes are built fresh for every forward pass; nothing is cached between
//! passes, which suits graphs whose vertex count changes from one input to
//! the next.

mod gradcheck;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub use gradcheck::{finite_difference_check, GradCheckReport};

/// Floor applied to the target probability inside [`Tape::cross_entropy`].
pub const LOG_EPSILON: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Hadamard(Var, Var),
    Scale(Var, f64),
    ScalarMul { scalar: Var, matrix: Var },
    Transpose(Var),
    Relu(Var),
    RowSoftmax(Var),
    Sigmoid(Var),
    InvSqrtClamped { input: Var, epsilon: f64 },
    CrossEntropy { pred: Var, target: usize },
    Sum(Var),
    MeanRows(Var),
    FlattenRows(Var),
    PadRows(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: DMatrix<f64>,
    op: Op,
    requires_grad: bool,
}

/// Records a forward computation for later differentiation.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to every node that needed one.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<DMatrix<f64>>>,
}

impl Gradients {
    /// Gradient with respect to `v`, or `None` if the loss does not depend on it.
    pub fn get(&self, v: Var) -> Option<&DMatrix<f64>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient with respect to `v`, zero-filled when the loss does not reach it.
    pub fn wrt(&self, tape: &Tape, v: Var) -> DMatrix<f64> {
        match self.get(v) {
            Some(g) => g.clone(),
            None => {
                let shape = tape.value(v).shape();
                DMatrix::zeros(shape.0, shape.1)
            }
        }
    }
}

fn shape_str(m: &DMatrix<f64>) -> String {
    format!("{}x{}", m.nrows(), m.ncols())
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node recorded after the first `len`. Handles to dropped
    /// nodes must not be used afterwards.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    pub fn value(&self, v: Var) -> &DMatrix<f64> {
        &self.nodes[v.0].value
    }

    /// Scalar payload of a 1x1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[(0, 0)]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: DMatrix<f64>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn unary(&mut self, input: Var, value: DMatrix<f64>, op: Op) -> Var {
        let rg = self.requires_grad(input);
        self.push(value, op, rg)
    }

    fn binary(&mut self, a: Var, b: Var, value: DMatrix<f64>, op: Op) -> Var {
        let rg = self.requires_grad(a) || self.requires_grad(b);
        self.push(value, op, rg)
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: DMatrix<f64>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: DMatrix<f64>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.ncols() != vb.nrows() {
            return Err(Error::dim(
                "matmul",
                format!("{} times {}", shape_str(va), shape_str(vb)),
            ));
        }
        let out = va * vb;
        Ok(self.binary(a, b, out, Op::MatMul(a, b)))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::dim(
                op,
                format!("{} vs {}", shape_str(va), shape_str(vb)),
            ));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.value(a) + self.value(b);
        Ok(self.binary(a, b, out, Op::Add(a, b)))
    }

    /// Elementwise product.
    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("hadamard", a, b)?;
        let out = self.value(a).component_mul(self.value(b));
        Ok(self.binary(a, b, out, Op::Hadamard(a, b)))
    }

    /// Multiplication by a fixed real constant.
    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a) * c;
        self.unary(a, out, Op::Scale(a, c))
    }

    /// Multiplies every entry of `matrix` by the 1x1 node `scalar`.
    pub fn scalar_mul(&mut self, scalar: Var, matrix: Var) -> Result<Var> {
        if self.value(scalar).shape() != (1, 1) {
            return Err(Error::dim(
                "scalar_mul",
                format!("scalar operand is {}", shape_str(self.value(scalar))),
            ));
        }
        let out = self.value(matrix) * self.scalar(scalar);
        Ok(self.binary(scalar, matrix, out, Op::ScalarMul { scalar, matrix }))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.unary(a, out, Op::Transpose(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        self.unary(a, out, Op::Relu(a))
    }

    /// Softmax applied to each row independently, shifted by the row maximum.
    pub fn row_softmax(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for mut row in out.row_iter_mut() {
            let max = row.max();
            row.apply(|x| *x = (*x - max).exp());
            let total = row.sum();
            row /= total;
        }
        self.unary(a, out, Op::RowSoftmax(a))
    }

    /// Elementwise logistic function.
    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(logistic);
        self.unary(a, out, Op::Sigmoid(a))
    }

    /// Elementwise `max(x, epsilon)^(-1/2)`; the gradient is zero where the
    /// clamp is active.
    pub fn inv_sqrt_clamped(&mut self, a: Var, epsilon: f64) -> Var {
        let out = self.value(a).map(|x| x.max(epsilon).sqrt().recip());
        self.unary(a, out, Op::InvSqrtClamped { input: a, epsilon })
    }

    /// `-ln(max(pred[target], 1e-12))` for a 1xC probability row.
    pub fn cross_entropy(&mut self, pred: Var, target: usize) -> Result<Var> {
        let p = self.value(pred);
        if p.nrows() != 1 {
            return Err(Error::dim(
                "cross_entropy",
                format!("prediction is {}, expected one row", shape_str(p)),
            ));
        }
        if target >= p.ncols() {
            return Err(Error::Parameter(format!(
                "target class {target} out of range for {} classes",
                p.ncols()
            )));
        }
        let loss = -p[(0, target)].max(LOG_EPSILON).ln();
        Ok(self.unary(
            pred,
            DMatrix::from_element(1, 1, loss),
            Op::CrossEntropy { pred, target },
        ))
    }

    /// Sum of all entries, as a 1x1 node.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.unary(a, DMatrix::from_element(1, 1, s), Op::Sum(a))
    }

    /// Column means: N x h to 1 x h.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let out = v.row_mean();
        let out = DMatrix::from_row_slice(1, v.ncols(), out.as_slice());
        self.unary(a, out, Op::MeanRows(a))
    }

    /// Concatenates the rows of an r x c node into a 1 x rc row vector.
    pub fn flatten_rows(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let (r, c) = v.shape();
        let out = DMatrix::from_fn(1, r * c, |_, k| v[(k / c, k % c)]);
        self.unary(a, out, Op::FlattenRows(a))
    }

    /// Appends zero rows until the node has `rows` rows.
    pub fn pad_rows(&mut self, a: Var, rows: usize) -> Result<Var> {
        let v = self.value(a);
        if v.nrows() > rows {
            return Err(Error::Capacity {
                vertices: v.nrows(),
                capacity: rows,
            });
        }
        let mut out = DMatrix::zeros(rows, v.ncols());
        out.rows_mut(0, v.nrows()).copy_from(v);
        Ok(self.unary(a, out, Op::PadRows(a)))
    }

    /// Back-propagates from a 1x1 `loss` to every node that requires a gradient.
    ///
    /// Gradients accumulate additively, so a node used on several paths
    /// receives the sum of the path contributions.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got {}",
                shape_str(self.value(loss))
            )));
        }
        let mut grads: Vec<Option<DMatrix<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(DMatrix::from_element(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(
        &self,
        op: &Op,
        out: &DMatrix<f64>,
        g: &DMatrix<f64>,
        grads: &mut [Option<DMatrix<f64>>],
    ) {
        let mut acc = |v: Var, delta: DMatrix<f64>| {
            if !self.requires_grad(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => *existing += delta,
                slot @ None => *slot = Some(delta),
            }
        };
        match *op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.requires_grad(a) {
                    acc(a, g * self.value(b).transpose());
                }
                if self.requires_grad(b) {
                    acc(b, self.value(a).tr_mul(g));
                }
            }
            Op::Add(a, b) => {
                acc(a, g.clone());
                acc(b, g.clone());
            }
            Op::Hadamard(a, b) => {
                if self.requires_grad(a) {
                    acc(a, g.component_mul(self.value(b)));
                }
                if self.requires_grad(b) {
                    acc(b, g.component_mul(self.value(a)));
                }
            }
            Op::Scale(a, c) => acc(a, g * c),
            Op::ScalarMul { scalar, matrix } => {
                if self.requires_grad(scalar) {
                    let ds = g.dot(self.value(matrix));
                    acc(scalar, DMatrix::from_element(1, 1, ds));
                }
                if self.requires_grad(matrix) {
                    acc(matrix, g * self.scalar(scalar));
                }
            }
            Op::Transpose(a) => acc(a, g.transpose()),
            Op::Relu(a) => {
                // subgradient 0 at the kink
                acc(a, g.zip_map(out, |gi, y| if y > 0.0 { gi } else { 0.0 }));
            }
            Op::RowSoftmax(a) => {
                let mut d = g.component_mul(out);
                for (i, mut row) in d.row_iter_mut().enumerate() {
                    let dot = row.sum();
                    for (j, x) in row.iter_mut().enumerate() {
                        *x -= out[(i, j)] * dot;
                    }
                }
                acc(a, d);
            }
            Op::Sigmoid(a) => acc(a, g.zip_map(out, |gi, s| gi * s * (1.0 - s))),
            Op::InvSqrtClamped { input, epsilon } => {
                let x = self.value(input);
                let d = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
                    if x[(i, j)] > epsilon {
                        // d/dx x^(-1/2) = -y^3 / 2
                        let y = out[(i, j)];
                        -0.5 * y * y * y * g[(i, j)]
                    } else {
                        0.0
                    }
                });
                acc(input, d);
            }
            Op::CrossEntropy { pred, target } => {
                let p = self.value(pred);
                let mut d = DMatrix::zeros(1, p.ncols());
                let pt = p[(0, target)];
                if pt > LOG_EPSILON {
                    d[(0, target)] = -g[(0, 0)] / pt;
                }
                acc(pred, d);
            }
            Op::Sum(a) => {
                let (r, c) = self.value(a).shape();
                acc(a, DMatrix::from_element(r, c, g[(0, 0)]));
            }
            Op::MeanRows(a) => {
                let (r, c) = self.value(a).shape();
                let inv = 1.0 / r as f64;
                acc(a, DMatrix::from_fn(r, c, |_, j| g[(0, j)] * inv));
            }
            Op::FlattenRows(a) => {
                let (r, c) = self.value(a).shape();
                acc(a, DMatrix::from_fn(r, c, |i, j| g[(0, i * c + j)]));
            }
            Op::PadRows(a) => {
                let (r, c) = self.value(a).shape();
                acc(a, g.view((0, 0), (r, c)).into_owned());
            }
        }
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
