//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records every primitive as it is evaluated. Nodes are created
//! either as trainable leaves ([`Tape::param`]), as constants
//! ([`Tape::constant`]), or as the result of a primitive applied to earlier
//! nodes. [`Tape::backward`] walks the record in reverse and accumulates
//! adjoints for every node that depends on a trainable leaf.
//!
//! The primitive set is deliberately small; everything the models need is
//! composed from it.

use std::sync::Arc;

use super::matrix::Matrix;
use super::silu::{silu, silu_derivative};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddBias(Var, Var),
    MatMul(Var, Var),
    Silu(Var),
    Square(Var),
    Abs(Var),
    Sum(Var),
    Mean(Var),
    Norm(Var),
    RowSum(Var),
    MulCol(Var, Var),
    Gather(Var, Arc<[usize]>),
    ScatterAdd(Var, Arc<[usize]>, usize),
    ConcatCols(Vec<Var>),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Matrix,
    requires_grad: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Clone, Debug)]
pub struct Gradients {
    adjoints: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`; zeros if `var` does not
    /// influence the loss.
    pub fn wrt(&self, var: Var) -> Matrix {
        match &self.adjoints[var.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[var.0];
                Matrix::zeros(r, c)
            }
        }
    }

    pub fn get(&self, var: Var) -> Option<&Matrix> {
        self.adjoints[var.0].as_ref()
    }
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

    /// Trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(Op::Leaf, value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(Op::Leaf, value, false)
    }

    pub fn value(&self, var: Var) -> &Matrix {
        &self.nodes[var.0].value
    }

    pub fn scalar(&self, var: Var) -> f64 {
        self.nodes[var.0].value.as_slice()[0]
    }

    fn push(&mut self, op: Op, value: Matrix, requires_grad: bool) -> Var {
        self.nodes.push(Node { op, value, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, op: Op) -> Result<Var> {
        let value = evaluate(&op, |v| &self.nodes[v.0].value)?;
        let requires_grad = inputs(&op).iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push(op, value, requires_grad))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        self.record(Op::Scale(a, factor))
    }

    /// Adds a `1 x c` row to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        self.record(Op::AddBias(a, bias))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::MatMul(a, b))
    }

    pub fn silu(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Silu(a))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Square(a))
    }

    /// Elementwise absolute value; the subgradient at zero is zero.
    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Abs(a))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Mean(a))
    }

    /// Frobenius norm.
    pub fn norm(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Norm(a))
    }

    /// Sums each row into an `r x 1` column.
    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        self.record(Op::RowSum(a))
    }

    /// Scales row `r` of `a` by `s[r]`, where `s` is `r x 1`.
    pub fn mul_col(&mut self, a: Var, s: Var) -> Result<Var> {
        self.record(Op::MulCol(a, s))
    }

    /// Row `k` of the result is row `index[k]` of `a`.
    pub fn gather(&mut self, a: Var, index: Arc<[usize]>) -> Result<Var> {
        self.record(Op::Gather(a, index))
    }

    /// Row `r` of the result is the sum of the rows `k` of `a` with
    /// `index[k] == r`. Each output entry is summed in ascending value order,
    /// so the result does not depend on the order of the rows of `a`.
    pub fn scatter_add(&mut self, a: Var, index: Arc<[usize]>, rows: usize) -> Result<Var> {
        self.record(Op::ScatterAdd(a, index, rows))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        self.record(Op::ConcatCols(parts.to_vec()))
    }

    /// Recomputes every node from the recorded leaves.
    pub fn replay(&self) -> Result<Vec<Matrix>> {
        let mut values: Vec<Matrix> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match node.op {
                Op::Leaf => node.value.clone(),
                ref op => evaluate(op, |v| &values[v.0])?,
            };
            values.push(v);
        }
        Ok(values)
    }

    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let (rows, cols) = self.nodes[loss.0].value.shape();
        if (rows, cols) != (1, 1) {
            return Err(Error::NonScalarLoss { rows, cols });
        }
        let mut adjoints: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        adjoints[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = adjoints[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.requires_grad {
                self.propagate(&node.op, &node.value, &g, &mut adjoints);
            }
            adjoints[idx] = Some(g);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients { adjoints, shapes })
    }

    fn propagate(&self, op: &Op, out: &Matrix, g: &Matrix, adj: &mut [Option<Matrix>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        match *op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if wants(a) {
                    accumulate(adj, a, g.clone());
                }
                if wants(b) {
                    accumulate(adj, b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if wants(a) {
                    accumulate(adj, a, g.clone());
                }
                if wants(b) {
                    accumulate(adj, b, g.scale(-1.0));
                }
            }
            Op::Mul(a, b) => {
                if wants(a) {
                    accumulate(adj, a, g.zip_with(val(b), |x, y| x * y).expect("shape"));
                }
                if wants(b) {
                    accumulate(adj, b, g.zip_with(val(a), |x, y| x * y).expect("shape"));
                }
            }
            Op::Scale(a, f) => {
                if wants(a) {
                    accumulate(adj, a, g.scale(f));
                }
            }
            Op::AddBias(a, b) => {
                if wants(a) {
                    accumulate(adj, a, g.clone());
                }
                if wants(b) {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, &x) in gb.as_mut_slice().iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    accumulate(adj, b, gb);
                }
            }
            Op::MatMul(a, b) => {
                if wants(a) {
                    accumulate(adj, a, matmul_nt(g, val(b)));
                }
                if wants(b) {
                    accumulate(adj, b, matmul_tn(val(a), g));
                }
            }
            Op::Silu(a) => {
                if wants(a) {
                    accumulate(adj, a, g.zip_with(val(a), |x, y| x * silu_derivative(y)).expect("shape"));
                }
            }
            Op::Square(a) => {
                if wants(a) {
                    accumulate(adj, a, g.zip_with(val(a), |x, y| 2.0 * x * y).expect("shape"));
                }
            }
            Op::Abs(a) => {
                if wants(a) {
                    let sign = |y: f64| if y > 0.0 { 1.0 } else if y < 0.0 { -1.0 } else { 0.0 };
                    accumulate(adj, a, g.zip_with(val(a), |x, y| x * sign(y)).expect("shape"));
                }
            }
            Op::Sum(a) => {
                if wants(a) {
                    let (r, c) = val(a).shape();
                    accumulate(adj, a, Matrix::filled(r, c, g.as_slice()[0]));
                }
            }
            Op::Mean(a) => {
                if wants(a) {
                    let (r, c) = val(a).shape();
                    let n = (r * c).max(1) as f64;
                    accumulate(adj, a, Matrix::filled(r, c, g.as_slice()[0] / n));
                }
            }
            Op::Norm(a) => {
                if wants(a) {
                    let norm = out.as_slice()[0];
                    let ga = if norm > 0.0 {
                        val(a).scale(g.as_slice()[0] / norm)
                    } else {
                        let (r, c) = val(a).shape();
                        Matrix::zeros(r, c)
                    };
                    accumulate(adj, a, ga);
                }
            }
            Op::RowSum(a) => {
                if wants(a) {
                    let (r, c) = val(a).shape();
                    let mut ga = Matrix::zeros(r, c);
                    for i in 0..r {
                        let gi = g.get(i, 0);
                        ga.row_mut(i).iter_mut().for_each(|x| *x = gi);
                    }
                    accumulate(adj, a, ga);
                }
            }
            Op::MulCol(a, s) => {
                let (av, sv) = (val(a), val(s));
                if wants(a) {
                    let mut ga = g.clone();
                    for i in 0..ga.rows() {
                        let f = sv.get(i, 0);
                        ga.row_mut(i).iter_mut().for_each(|x| *x *= f);
                    }
                    accumulate(adj, a, ga);
                }
                if wants(s) {
                    let data = (0..av.rows())
                        .map(|i| av.row(i).iter().zip(g.row(i)).map(|(x, y)| x * y).sum())
                        .collect::<Vec<f64>>();
                    accumulate(adj, s, Matrix::column_vector(&data));
                }
            }
            Op::Gather(a, ref index) => {
                if wants(a) {
                    let (r, c) = val(a).shape();
                    let mut ga = Matrix::zeros(r, c);
                    for (k, &src) in index.iter().enumerate() {
                        for (o, &x) in ga.row_mut(src).iter_mut().zip(g.row(k)) {
                            *o += x;
                        }
                    }
                    accumulate(adj, a, ga);
                }
            }
            Op::ScatterAdd(a, ref index, _) => {
                if wants(a) {
                    let c = g.cols();
                    let mut ga = Matrix::zeros(index.len(), c);
                    for (k, &dst) in index.iter().enumerate() {
                        ga.row_mut(k).copy_from_slice(g.row(dst));
                    }
                    accumulate(adj, a, ga);
                }
            }
            Op::ConcatCols(ref parts) => {
                let mut offset = 0;
                for &p in parts {
                    let pc = val(p).cols();
                    if wants(p) {
                        let mut gp = Matrix::zeros(g.rows(), pc);
                        for r in 0..g.rows() {
                            gp.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + pc]);
                        }
                        accumulate(adj, p, gp);
                    }
                    offset += pc;
                }
            }
        }
    }
}

fn accumulate(adj: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut adj[v.0] {
        Some(existing) => existing.add_assign_unchecked(&g),
        slot @ None => *slot = Some(g),
    }
}

fn inputs(op: &Op) -> Vec<Var> {
    match *op {
        Op::Leaf => vec![],
        Op::Add(a, b)
        | Op::Sub(a, b)
        | Op::Mul(a, b)
        | Op::AddBias(a, b)
        | Op::MatMul(a, b)
        | Op::MulCol(a, b) => vec![a, b],
        Op::Scale(a, _)
        | Op::Silu(a)
        | Op::Square(a)
        | Op::Abs(a)
        | Op::Sum(a)
        | Op::Mean(a)
        | Op::Norm(a)
        | Op::RowSum(a)
        | Op::Gather(a, _)
        | Op::ScatterAdd(a, _, _) => vec![a],
        Op::ConcatCols(ref parts) => parts.clone(),
    }
}

fn evaluate<'a>(op: &Op, val: impl Fn(Var) -> &'a Matrix) -> Result<Matrix> {
    let out = match *op {
        Op::Leaf => unreachable!("leaves are not evaluated"),
        Op::Add(a, b) => val(a).add(val(b))?,
        Op::Sub(a, b) => val(a).sub(val(b))?,
        Op::Mul(a, b) => val(a).zip_with(val(b), |x, y| x * y)?,
        Op::Scale(a, f) => val(a).scale(f),
        Op::AddBias(a, b) => {
            let (av, bv) = (val(a), val(b));
            if bv.rows() != 1 || bv.cols() != av.cols() {
                return Err(Error::Shape(format!(
                    "bias {}x{} for {}x{}",
                    bv.rows(),
                    bv.cols(),
                    av.rows(),
                    av.cols()
                )));
            }
            let mut out = av.clone();
            for r in 0..out.rows() {
                for (o, &x) in out.row_mut(r).iter_mut().zip(bv.as_slice()) {
                    *o += x;
                }
            }
            out
        }
        Op::MatMul(a, b) => val(a).matmul(val(b))?,
        Op::Silu(a) => val(a).map(silu),
        Op::Square(a) => val(a).map(|x| x * x),
        Op::Abs(a) => val(a).map(f64::abs),
        Op::Sum(a) => Matrix::scalar(val(a).sum()),
        Op::Mean(a) => {
            let v = val(a);
            Matrix::scalar(v.sum() / v.len().max(1) as f64)
        }
        Op::Norm(a) => Matrix::scalar(val(a).frobenius_norm()),
        Op::RowSum(a) => {
            let v = val(a);
            let data: Vec<f64> = (0..v.rows()).map(|r| v.row(r).iter().sum()).collect();
            Matrix::column_vector(&data)
        }
        Op::MulCol(a, s) => {
            let (av, sv) = (val(a), val(s));
            if sv.shape() != (av.rows(), 1) {
                return Err(Error::Shape(format!(
                    "row scale {}x{} for {}x{}",
                    sv.rows(),
                    sv.cols(),
                    av.rows(),
                    av.cols()
                )));
            }
            let mut out = av.clone();
            for r in 0..out.rows() {
                let f = sv.get(r, 0);
                out.row_mut(r).iter_mut().for_each(|x| *x *= f);
            }
            out
        }
        Op::Gather(a, ref index) => {
            let v = val(a);
            let mut out = Matrix::zeros(index.len(), v.cols());
            for (k, &src) in index.iter().enumerate() {
                if src >= v.rows() {
                    return Err(Error::Shape(format!("gather index {src} out of {} rows", v.rows())));
                }
                out.row_mut(k).copy_from_slice(v.row(src));
            }
            out
        }
        Op::ScatterAdd(a, ref index, rows) => {
            let v = val(a);
            if index.len() != v.rows() {
                return Err(Error::Shape(format!(
                    "scatter index length {} for {} rows",
                    index.len(),
                    v.rows()
                )));
            }
            if let Some(&bad) = index.iter().find(|&&d| d >= rows) {
                return Err(Error::Shape(format!("scatter target {bad} out of {rows} rows")));
            }
            sorted_scatter_add(v, index, rows)
        }
        Op::ConcatCols(ref parts) => {
            let rows = parts.first().map_or(0, |&p| val(p).rows());
            if parts.iter().any(|&p| val(p).rows() != rows) {
                return Err(Error::Shape("concat of matrices with different row counts".into()));
            }
            let cols: usize = parts.iter().map(|&p| val(p).cols()).sum();
            let mut out = Matrix::zeros(rows, cols);
            for r in 0..rows {
                let mut offset = 0;
                for &p in parts {
                    let src = val(p).row(r);
                    out.row_mut(r)[offset..offset + src.len()].copy_from_slice(src);
                    offset += src.len();
                }
            }
            out
        }
    };
    Ok(out)
}

fn sorted_scatter_add(v: &Matrix, index: &[usize], rows: usize) -> Matrix {
    let cols = v.cols();
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); rows];
    for (k, &dst) in index.iter().enumerate() {
        buckets[dst].push(k);
    }
    let mut out = Matrix::zeros(rows, cols);
    let mut scratch = Vec::new();
    for (r, members) in buckets.iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        for c in 0..cols {
            scratch.clear();
            scratch.extend(members.iter().map(|&k| v.get(k, c)));
            scratch.sort_by(f64::total_cmp);
            out.set(r, c, scratch.iter().sum());
        }
    }
    out
}

/// `g · bᵀ`
fn matmul_nt(g: &Matrix, b: &Matrix) -> Matrix {
    let (n, m) = (g.rows(), b.rows());
    let mut out = Matrix::zeros(n, m);
    for i in 0..n {
        let gi = g.row(i);
        for j in 0..m {
            out.set(i, j, super::matrix::dot(gi, b.row(j)));
        }
    }
    out
}

/// `aᵀ · g`
fn matmul_tn(a: &Matrix, g: &Matrix) -> Matrix {
    let (k, m) = (a.cols(), g.cols());
    let mut out = Matrix::zeros(k, m);
    for r in 0..a.rows() {
        let gr = g.row(r);
        for (p, &ap) in a.row(r).iter().enumerate() {
            if ap == 0.0 {
                continue;
            }
            for (o, &x) in out.row_mut(p).iter_mut().zip(gr) {
                *o += ap * x;
            }
        }
    }
    out
}
