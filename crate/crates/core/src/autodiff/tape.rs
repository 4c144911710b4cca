//! Define-by-run tape for reverse-mode differentiation over [`Tensor`]s.
//!
//! Every operation on a [`Var`] appends one node holding its forward value
//! and the operand ids its backward rule needs. Because nodes only ever
//! reference earlier nodes, append order is a topological order and the
//! backward pass is a single reverse sweep.
//!
//! ```
//! use uda_core::autodiff::{Tape, Tensor};
//!
//! let tape = Tape::new();
//! let x = tape.leaf(Tensor::from_rows(&[[1.0, 2.0]]));
//! let y = x.mul(x).unwrap().sum();
//! let grads = y.backward().unwrap();
//! assert_eq!(grads.wrt(x).data(), &[2.0, 4.0]);
//! ```

use std::cell::{Ref, RefCell};

use super::svd::svd;
use super::tensor::{matmul, matmul_a_bt, matmul_at_b, Tensor};
use crate::error::{Error, Result};

/// Lower clamp applied before every `log`.
pub const EPS_LOG: f64 = 1e-12;

/// Singular values at or below `NUCLEAR_REL_CUTOFF · σ_max` are dropped from
/// the nuclear-norm subgradient.
pub const NUCLEAR_REL_CUTOFF: f64 = 1e-10;

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    Scale(usize, f64),
    Relu(usize),
    Log(usize),
    SoftmaxRows(usize),
    Sum(usize),
    Mean(usize),
    MeanRows(usize),
    Transpose(usize),
    ConcatRows(Vec<usize>),
    GatherRows(usize, Vec<usize>),
    Grl(usize, f64),
    NuclearNorm(usize, Tensor),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of one forward computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A differentiable input.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// An input that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    /// Stacks matrices with equal column counts.
    pub fn concat_rows<'t>(&'t self, parts: &[Var<'t>]) -> Result<Var<'t>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat_rows of zero tensors".into()))?;
        let (value, requires_grad) = {
            let nodes = self.nodes.borrow();
            let (_, cols) = nodes[first.id].value.expect_matrix("concat_rows")?;
            let mut rows = 0;
            let mut data = Vec::new();
            for p in parts {
                let v = &nodes[p.id].value;
                let (r, c) = v.expect_matrix("concat_rows")?;
                if c != cols {
                    return Err(Error::shape("concat_rows", nodes[first.id].value.shape(), v.shape()));
                }
                rows += r;
                data.extend_from_slice(v.data());
            }
            let rg = parts.iter().any(|p| nodes[p.id].requires_grad);
            (Tensor::matrix(rows, cols, data)?, rg)
        };
        let ids = parts.iter().map(|p| p.id).collect();
        Ok(self.push(value, Op::ConcatRows(ids), requires_grad))
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn requires_grad(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    fn backward_from(&self, root: usize) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        if nodes[root].value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar output, got shape {:?}",
                nodes[root].value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; root + 1];
        grads[root] = Some(Tensor::filled(nodes[root].value.shape(), 1.0));

        for id in (0..=root).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    if nodes[*a].requires_grad {
                        accumulate(&mut grads, *a, matmul_a_bt(&g, &nodes[*b].value));
                    }
                    if nodes[*b].requires_grad {
                        accumulate(&mut grads, *b, matmul_at_b(&nodes[*a].value, &g));
                    }
                }
                Op::Add(a, b) => {
                    if nodes[*a].requires_grad {
                        accumulate(&mut grads, *a, g.clone());
                    }
                    if nodes[*b].requires_grad {
                        accumulate(&mut grads, *b, g.clone());
                    }
                }
                Op::Sub(a, b) => {
                    if nodes[*a].requires_grad {
                        accumulate(&mut grads, *a, g.clone());
                    }
                    if nodes[*b].requires_grad {
                        accumulate(&mut grads, *b, g.map(|v| -v));
                    }
                }
                Op::Mul(a, b) => {
                    if nodes[*a].requires_grad {
                        accumulate(&mut grads, *a, g.zip_map(&nodes[*b].value, |x, y| x * y));
                    }
                    if nodes[*b].requires_grad {
                        accumulate(&mut grads, *b, g.zip_map(&nodes[*a].value, |x, y| x * y));
                    }
                }
                Op::AddRow(a, r) => {
                    if nodes[*r].requires_grad {
                        let cols = g.cols();
                        let mut col_sums = vec![0.0; cols];
                        for row in g.data().chunks_exact(cols) {
                            for (s, v) in col_sums.iter_mut().zip(row) {
                                *s += v;
                            }
                        }
                        let t = Tensor::new(nodes[*r].value.shape().to_vec(), col_sums)?;
                        accumulate(&mut grads, *r, t);
                    }
                    if nodes[*a].requires_grad {
                        accumulate(&mut grads, *a, g.clone());
                    }
                }
                Op::Scale(a, c) => {
                    if nodes[*a].requires_grad {
                        accumulate(&mut grads, *a, g.map(|v| v * c));
                    }
                }
                Op::Relu(a) => {
                    if nodes[*a].requires_grad {
                        let d = g.zip_map(&nodes[*a].value, |gv, x| if x > 0.0 { gv } else { 0.0 });
                        accumulate(&mut grads, *a, d);
                    }
                }
                Op::Log(a) => {
                    if nodes[*a].requires_grad {
                        let d = g.zip_map(&nodes[*a].value, |gv, x| if x > EPS_LOG { gv / x } else { 0.0 });
                        accumulate(&mut grads, *a, d);
                    }
                }
                Op::SoftmaxRows(a) => {
                    if nodes[*a].requires_grad {
                        let y = &node.value;
                        let cols = y.cols();
                        let mut d = Vec::with_capacity(y.len());
                        for (yr, gr) in y.data().chunks_exact(cols).zip(g.data().chunks_exact(cols)) {
                            let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                            d.extend(yr.iter().zip(gr).map(|(yv, gv)| yv * (gv - dot)));
                        }
                        accumulate(&mut grads, *a, Tensor::new(y.shape().to_vec(), d)?);
                    }
                }
                Op::Sum(a) => {
                    if nodes[*a].requires_grad {
                        accumulate(&mut grads, *a, Tensor::filled(nodes[*a].value.shape(), g.item()));
                    }
                }
                Op::Mean(a) => {
                    if nodes[*a].requires_grad {
                        let n = nodes[*a].value.len() as f64;
                        accumulate(&mut grads, *a, Tensor::filled(nodes[*a].value.shape(), g.item() / n));
                    }
                }
                Op::MeanRows(a) => {
                    if nodes[*a].requires_grad {
                        let src = &nodes[*a].value;
                        let b = src.rows() as f64;
                        let row: Vec<f64> = g.data().iter().map(|v| v / b).collect();
                        let mut d = Vec::with_capacity(src.len());
                        for _ in 0..src.rows() {
                            d.extend_from_slice(&row);
                        }
                        accumulate(&mut grads, *a, Tensor::new(src.shape().to_vec(), d)?);
                    }
                }
                Op::Transpose(a) => {
                    if nodes[*a].requires_grad {
                        accumulate(&mut grads, *a, g.transpose());
                    }
                }
                Op::ConcatRows(ids) => {
                    let cols = g.cols();
                    let mut offset = 0;
                    for &p in ids {
                        let rows = nodes[p].value.rows();
                        if nodes[p].requires_grad {
                            let slice = g.data()[offset * cols..(offset + rows) * cols].to_vec();
                            accumulate(&mut grads, p, Tensor::matrix(rows, cols, slice)?);
                        }
                        offset += rows;
                    }
                }
                Op::GatherRows(a, idx) => {
                    if nodes[*a].requires_grad {
                        let mut d = Tensor::zeros_like(&nodes[*a].value);
                        let cols = d.cols();
                        for (k, &i) in idx.iter().enumerate() {
                            let src = &g.data()[k * cols..(k + 1) * cols];
                            for (o, v) in d.data_mut()[i * cols..(i + 1) * cols].iter_mut().zip(src) {
                                *o += v;
                            }
                        }
                        accumulate(&mut grads, *a, d);
                    }
                }
                Op::Grl(a, lambda) => {
                    if nodes[*a].requires_grad {
                        accumulate(&mut grads, *a, g.map(|v| -lambda * v));
                    }
                }
                Op::NuclearNorm(a, factor) => {
                    if nodes[*a].requires_grad {
                        let s = g.item();
                        accumulate(&mut grads, *a, factor.map(|v| s * v));
                    }
                }
            }
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: usize, g: Tensor) {
    match &mut grads[id] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Result of one backward sweep, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the root with respect to `v`, if any flowed there.
    pub fn get(&self, v: Var<'_>) -> Option<&Tensor> {
        self.grads.get(v.id).and_then(|g| g.as_ref())
    }

    /// Like [`get`](Self::get) but materializes zeros for unreached nodes.
    pub fn wrt(&self, v: Var<'_>) -> Tensor {
        match self.get(v) {
            Some(g) => g.clone(),
            None => Tensor::zeros(v.value().shape()),
        }
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    /// Borrow of the forward value. Drop it before recording new operations.
    pub fn value(&self) -> Ref<'t, Tensor> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.id].value)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    /// Scalar value of a single-element node.
    pub fn item(&self) -> f64 {
        self.value().item()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.requires_grad(self.id)
    }

    pub fn backward(&self) -> Result<Gradients> {
        self.tape.backward_from(self.id)
    }

    fn unary(self, value: Tensor, op: Op) -> Var<'t> {
        let rg = self.requires_grad();
        self.tape.push(value, op, rg)
    }

    fn binary(self, other: Var<'t>, value: Tensor, op: Op) -> Var<'t> {
        let rg = self.requires_grad() || other.requires_grad();
        self.tape.push(value, op, rg)
    }

    fn same_shape(self, other: Var<'t>, op: &'static str) -> Result<()> {
        let (a, b) = (self.value(), other.value());
        if a.shape() != b.shape() {
            return Err(Error::shape(op, a.shape(), b.shape()));
        }
        Ok(())
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let v = matmul(&self.value(), &other.value())?;
        Ok(self.binary(other, v, Op::MatMul(self.id, other.id)))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_shape(other, "add")?;
        let v = self.value().zip_map(&other.value(), |a, b| a + b);
        Ok(self.binary(other, v, Op::Add(self.id, other.id)))
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_shape(other, "sub")?;
        let v = self.value().zip_map(&other.value(), |a, b| a - b);
        Ok(self.binary(other, v, Op::Sub(self.id, other.id)))
    }

    /// Elementwise product.
    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_shape(other, "mul")?;
        let v = self.value().zip_map(&other.value(), |a, b| a * b);
        Ok(self.binary(other, v, Op::Mul(self.id, other.id)))
    }

    /// Adds the `1×n` row `row` to every row of `self`.
    pub fn add_row(self, row: Var<'t>) -> Result<Var<'t>> {
        let v = {
            let (a, r) = (self.value(), row.value());
            let (_, cols) = a.expect_matrix("add_row")?;
            if r.len() != cols || r.rank() != 2 || r.rows() != 1 {
                return Err(Error::shape("add_row", a.shape(), r.shape()));
            }
            let mut out = a.clone();
            for chunk in out.data_mut().chunks_exact_mut(cols) {
                for (o, b) in chunk.iter_mut().zip(r.data()) {
                    *o += b;
                }
            }
            out
        };
        Ok(self.binary(row, v, Op::AddRow(self.id, row.id)))
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        let v = self.value().map(|x| x * c);
        self.unary(v, Op::Scale(self.id, c))
    }

    pub fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }

    pub fn relu(self) -> Var<'t> {
        let v = self.value().map(|x| if x < 0.0 { 0.0 } else { x });
        self.unary(v, Op::Relu(self.id))
    }

    /// `ln(max(x, EPS_LOG))`; the gradient is zero where the clamp is active.
    /// NaN inputs stay NaN.
    pub fn log(self) -> Var<'t> {
        let v = self.value().map(|x| if x < EPS_LOG { EPS_LOG.ln() } else { x.ln() });
        self.unary(v, Op::Log(self.id))
    }

    pub fn softmax_rows(self) -> Result<Var<'t>> {
        let v = {
            let a = self.value();
            let (_, cols) = a.expect_matrix("softmax_rows")?;
            let mut out = a.clone();
            for row in out.data_mut().chunks_exact_mut(cols) {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for x in row.iter_mut() {
                    *x = (*x - max).exp();
                    z += *x;
                }
                for x in row.iter_mut() {
                    *x /= z;
                }
            }
            out
        };
        Ok(self.unary(v, Op::SoftmaxRows(self.id)))
    }

    pub fn sum(self) -> Var<'t> {
        let v = Tensor::scalar(self.value().sum());
        self.unary(v, Op::Sum(self.id))
    }

    pub fn mean(self) -> Var<'t> {
        let v = {
            let a = self.value();
            Tensor::scalar(a.sum() / a.len() as f64)
        };
        self.unary(v, Op::Mean(self.id))
    }

    /// Column means over the rows of a `b×k` matrix, as a `1×k` row.
    pub fn mean_rows(self) -> Result<Var<'t>> {
        let v = {
            let a = self.value();
            let (rows, cols) = a.expect_matrix("mean_rows")?;
            if rows == 0 {
                return Err(Error::Contract("mean_rows of an empty matrix".into()));
            }
            let mut acc = vec![0.0; cols];
            for row in a.data().chunks_exact(cols) {
                for (s, x) in acc.iter_mut().zip(row) {
                    *s += x;
                }
            }
            for s in acc.iter_mut() {
                *s /= rows as f64;
            }
            Tensor::matrix(1, cols, acc)?
        };
        Ok(self.unary(v, Op::MeanRows(self.id)))
    }

    pub fn transpose(self) -> Result<Var<'t>> {
        let v = {
            let a = self.value();
            a.expect_matrix("transpose")?;
            a.transpose()
        };
        Ok(self.unary(v, Op::Transpose(self.id)))
    }

    /// Selects rows by index; repeated indices are allowed.
    pub fn gather_rows(self, idx: &[usize]) -> Result<Var<'t>> {
        let v = {
            let a = self.value();
            let (rows, _) = a.expect_matrix("gather_rows")?;
            if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
                return Err(Error::Contract(format!(
                    "gather_rows index {bad} out of range for {rows} rows"
                )));
            }
            a.select_rows(idx)
        };
        Ok(self.unary(v, Op::GatherRows(self.id, idx.to_vec())))
    }

    /// Gradient reversal: identity forward, `-lambda · g` backward.
    pub fn grl(self, lambda: f64) -> Result<Var<'t>> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::Config(format!(
                "gradient reversal factor must be a finite value >= 0, got {lambda}"
            )));
        }
        let v = self.value().clone();
        Ok(self.unary(v, Op::Grl(self.id, lambda)))
    }

    /// Sum of singular values. Backward uses the subgradient `U_r V_rᵀ`.
    /// Non-finite input gives NaN rather than an SVD failure.
    pub fn nuclear_norm(self) -> Result<Var<'t>> {
        let (value, factor) = {
            let a = self.value();
            if !a.is_finite() {
                let nan = a.map(|_| f64::NAN);
                drop(a);
                return Ok(self.unary(Tensor::scalar(f64::NAN), Op::NuclearNorm(self.id, nan)));
            }
            let d = svd(&a)?;
            let factor = d.polar_factor(NUCLEAR_REL_CUTOFF);
            (Tensor::scalar(d.s.iter().sum()), factor)
        };
        Ok(self.unary(value, Op::NuclearNorm(self.id, factor)))
    }
}
