//! Reverse-mode differentiation over row-batched matrices.
//!
//! Each forward op appends a node holding its value. [`Tape::backward`] walks
//! the nodes in reverse creation order, which is a valid topological order
//! because a node can only reference nodes created before it.

use super::ops::{check_dropout_p, softmax_into, Mode};
use super::{Matrix, RngState};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Affine { x: Var, w: Var, b: Var },
    Relu(Var),
    Tanh(Var),
    Dropout { x: Var, mask: Vec<f64> },
    Softmax(Var),
    Mul(Var, Var),
    Columns { x: Var, start: usize },
    Mse { pred: Var, target: Var },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Matrix>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Gradient of the last [`Tape::backward`] target w.r.t. `v`, if it was reached.
    pub fn grad(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    /// `y = x W^T + b` for a batch `x` (n x in), weights `W` (out x in), bias `b` (1 x out).
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if xv.cols() != wv.cols() || bv.rows() != 1 || bv.cols() != wv.rows() {
            return Err(Error::shape(
                "affine",
                format!(
                    "x {:?}, W {:?}, b {:?}",
                    xv.shape(),
                    wv.shape(),
                    bv.shape()
                ),
            ));
        }
        let n = xv.rows();
        let mut out = Matrix::zeros(n, wv.rows());
        for r in 0..n {
            out.row_slice_mut(r).copy_from_slice(bv.values());
        }
        Matrix::gemm(xv, false, wv, true, &mut out, true);
        Ok(self.push(out, Op::Affine { x, w, b }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(0.0));
        self.push(out, Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::tanh);
        self.push(out, Op::Tanh(x))
    }

    /// Inverted dropout. In eval mode, or with `p == 0`, the node is an exact identity.
    pub fn dropout(&mut self, x: Var, p: f64, mode: Mode, rng: &mut RngState) -> Result<Var> {
        check_dropout_p(p)?;
        let xv = self.value(x);
        let mask: Vec<f64> = if mode == Mode::Eval || p == 0.0 {
            vec![1.0; xv.len()]
        } else {
            let scale = 1.0 / (1.0 - p);
            (0..xv.len())
                .map(|_| if rng.uniform() < p { 0.0 } else { scale })
                .collect()
        };
        let mut out = xv.clone();
        for (o, m) in out.values_mut().iter_mut().zip(&mask) {
            *o *= m;
        }
        Ok(self.push(out, Op::Dropout { x, mask }))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.cols() == 0 {
            return Err(Error::Empty("softmax input"));
        }
        if !xv.is_finite() {
            return Err(Error::NonFinite("softmax input"));
        }
        let mut out = Matrix::zeros(xv.rows(), xv.cols());
        for r in 0..xv.rows() {
            softmax_into(xv.row_slice(r), out.row_slice_mut(r));
        }
        Ok(self.push(out, Op::Softmax(x)))
    }

    /// Elementwise (Hadamard) product of equal-shape operands.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::shape(
                "mul",
                format!("{:?} vs {:?}", av.shape(), bv.shape()),
            ));
        }
        let values = av.values().iter().zip(bv.values()).map(|(x, y)| x * y).collect();
        let out = Matrix::from_vec(av.rows(), av.cols(), values)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    /// Columns `start..start+len` of every row.
    pub fn columns(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        if start + len > xv.cols() || len == 0 {
            return Err(Error::shape(
                "columns",
                format!("range {start}..{} of {} columns", start + len, xv.cols()),
            ));
        }
        let mut out = Matrix::zeros(xv.rows(), len);
        for r in 0..xv.rows() {
            out.row_slice_mut(r)
                .copy_from_slice(&xv.row_slice(r)[start..start + len]);
        }
        Ok(self.push(out, Op::Columns { x, start }))
    }

    /// Mean over rows of the squared Euclidean error; a 1x1 node.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (pv, tv) = (self.value(pred), self.value(target));
        if pv.shape() != tv.shape() {
            return Err(Error::shape(
                "mse",
                format!("{:?} vs {:?}", pv.shape(), tv.shape()),
            ));
        }
        if pv.rows() == 0 {
            return Err(Error::Empty("mse batch"));
        }
        let sum: f64 = pv
            .values()
            .iter()
            .zip(tv.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let out = Matrix::from_vec(1, 1, vec![sum / pv.rows() as f64])?;
        Ok(self.push(out, Op::Mse { pred, target }))
    }

    /// Reverse sweep from a scalar node. Gradients of earlier calls are discarded.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::NoForward(format!(
                "node {} not on a tape of {} nodes",
                loss.0,
                self.nodes.len()
            )));
        }
        if self.nodes[loss.0].value.shape() != (1, 1) {
            return Err(Error::NoForward(format!(
                "backward target must be a scalar, got {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::from_vec(1, 1, vec![1.0])?);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Affine { x, w, b } => {
                    let xv = &self.nodes[x.0].value;
                    let wv = &self.nodes[w.0].value;
                    // dX = dY W
                    let mut dx = Matrix::zeros(xv.rows(), xv.cols());
                    Matrix::gemm(&g, false, wv, false, &mut dx, false);
                    // dW = dY^T X
                    let mut dw = Matrix::zeros(wv.rows(), wv.cols());
                    Matrix::gemm(&g, true, xv, false, &mut dw, false);
                    let mut db = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (acc, v) in db.values_mut().iter_mut().zip(g.row_slice(r)) {
                            *acc += v;
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *w, dw);
                    accumulate(&mut grads, *b, db);
                }
                Op::Relu(x) => {
                    let mut dx = g.clone();
                    for (d, y) in dx.values_mut().iter_mut().zip(node.value.values()) {
                        if *y <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Tanh(x) => {
                    let mut dx = g.clone();
                    for (d, y) in dx.values_mut().iter_mut().zip(node.value.values()) {
                        *d *= 1.0 - y * y;
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Dropout { x, mask } => {
                    let mut dx = g.clone();
                    for (d, m) in dx.values_mut().iter_mut().zip(mask) {
                        *d *= m;
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Softmax(x) => {
                    let y = &node.value;
                    let mut dx = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row_slice(r), g.row_slice(r));
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for ((d, yv), gv) in dx.row_slice_mut(r).iter_mut().zip(yr).zip(gr) {
                            *d = yv * (gv - dot);
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Mul(a, b) => {
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    let da_vals = g.values().iter().zip(bv.values()).map(|(d, y)| d * y).collect();
                    let db_vals = g.values().iter().zip(av.values()).map(|(d, x)| d * x).collect();
                    let da = Matrix::from_vec(g.rows(), g.cols(), da_vals)?;
                    let db = Matrix::from_vec(g.rows(), g.cols(), db_vals)?;
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Columns { x, start } => {
                    let xv = &self.nodes[x.0].value;
                    let mut dx = Matrix::zeros(xv.rows(), xv.cols());
                    for r in 0..g.rows() {
                        dx.row_slice_mut(r)[*start..*start + g.cols()]
                            .copy_from_slice(g.row_slice(r));
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Mse { pred, target } => {
                    let pv = &self.nodes[pred.0].value;
                    let tv = &self.nodes[target.0].value;
                    let scale = 2.0 * g.values()[0] / pv.rows() as f64;
                    let dp_vals: Vec<f64> = pv
                        .values()
                        .iter()
                        .zip(tv.values())
                        .map(|(p, t)| scale * (p - t))
                        .collect();
                    let dt_vals = dp_vals.iter().map(|v| -v).collect();
                    let dp = Matrix::from_vec(pv.rows(), pv.cols(), dp_vals)?;
                    let dt = Matrix::from_vec(pv.rows(), pv.cols(), dt_vals)?;
                    accumulate(&mut grads, *pred, dp);
                    accumulate(&mut grads, *target, dt);
                }
            }
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
