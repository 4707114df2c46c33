//! Reverse-mode differentiation over a fixed vocabulary of matrix operations.
//!
//! A [`Tape`] records every operation as a node holding its forward value.
//! [`Tape::backward`] walks the nodes in reverse and accumulates adjoints.
//! Leaves created with [`Tape::leaf`] are differentiable; values added with
//! [`Tape::constant`] never receive gradients, and nodes depending only on
//! constants are skipped during the backward sweep.

use crate::error::{Error, Result};
use crate::numerics::matrix::{logsumexp, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Leaf,
    Const,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    /// m×n + 1×n
    AddRow(Var, Var),
    /// m×n + m×1
    AddCol(Var, Var),
    Exp(Var),
    Log(Var),
    Softplus(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    Sum(Var),
    SumRows(Var),
    SumCols(Var),
    /// squared distances between columns of D×m and D×n
    SqDist(Var, Var),
    /// out_i = log Σ_j exp(M_ij + v_j), v is 1×n
    LseRowsPlus(Var, Var),
    /// out_j = log Σ_i exp(M_ij + u_i), u is m×1
    LseColsPlus(Var, Var),
}

struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

/// Gradient tape. Nodes are append-only; a [`Var`] is only meaningful for the
/// tape that created it.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient with respect to `v`, or `None` when `v` does not influence
    /// the output.
    pub fn wrt(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

fn shape_err(op: &str, a: &Matrix, b: &Matrix) -> Error {
    Error::shape(format!("{op}: {:?} vs {:?}", a.shape(), b.shape()))
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

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn derived(&mut self, value: Matrix, op: Op, parents: &[Var]) -> Var {
        let needs_grad = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        self.push(value, op, needs_grad)
    }

    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Const, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.derived(v, Op::MatMul(a, b), &[a, b]))
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul_nt(self.value(b))?;
        Ok(self.derived(v, Op::MatMulNt(a, b), &[a, b]))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.derived(v, Op::Transpose(a), &[a])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        Ok(self.derived(v, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        Ok(self.derived(v, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        Ok(self.derived(v, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).scale(s);
        self.derived(v, Op::Scale(a, s), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x + s);
        self.derived(v, Op::AddScalar(a), &[a])
    }

    /// Adds the 1×n `row` to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (av, rv) = (self.value(a), self.value(row));
        if rv.rows() != 1 || rv.cols() != av.cols() {
            return Err(shape_err("add_row", av, rv));
        }
        let mut v = av.clone();
        for i in 0..v.rows() {
            for (x, r) in v.row_mut(i).iter_mut().zip(rv.data()) {
                *x += r;
            }
        }
        Ok(self.derived(v, Op::AddRow(a, row), &[a, row]))
    }

    /// Adds the m×1 `col` to every column of `a`.
    pub fn add_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (av, cv) = (self.value(a), self.value(col));
        if cv.cols() != 1 || cv.rows() != av.rows() {
            return Err(shape_err("add_col", av, cv));
        }
        let mut v = av.clone();
        for i in 0..v.rows() {
            let c = cv.data()[i];
            v.row_mut(i).iter_mut().for_each(|x| *x += c);
        }
        Ok(self.derived(v, Op::AddCol(a, col), &[a, col]))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        self.derived(v, Op::Exp(a), &[a])
    }

    pub fn log(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::ln);
        self.derived(v, Op::Log(a), &[a])
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).map(softplus);
        self.derived(v, Op::Softplus(a), &[a])
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for i in 0..v.rows() {
            crate::numerics::matrix::softmax_in_place(v.row_mut(i));
        }
        self.derived(v, Op::SoftmaxRows(a), &[a])
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for i in 0..v.rows() {
            let row = v.row_mut(i);
            let lse = logsumexp(row);
            row.iter_mut().for_each(|x| *x -= lse);
        }
        self.derived(v, Op::LogSoftmaxRows(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Matrix::scalar(self.value(a).sum());
        self.derived(v, Op::Sum(a), &[a])
    }

    /// m×n → m×1
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let v = self.value(a).row_sums();
        self.derived(v, Op::SumRows(a), &[a])
    }

    /// m×n → 1×n
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let v = self.value(a).col_sums();
        self.derived(v, Op::SumCols(a), &[a])
    }

    /// Squared Euclidean distances between columns of `a` (D×m) and `b` (D×n).
    pub fn sq_dist(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = crate::numerics::matrix::pairwise_sq_dist(self.value(a), self.value(b))?;
        Ok(self.derived(v, Op::SqDist(a, b), &[a, b]))
    }

    /// Row-wise log-sum-exp of `m + row` with `row` broadcast down the rows.
    pub fn lse_rows_plus(&mut self, m: Var, row: Var) -> Result<Var> {
        let (mv, rv) = (self.value(m), self.value(row));
        if rv.rows() != 1 || rv.cols() != mv.cols() {
            return Err(shape_err("lse_rows_plus", mv, rv));
        }
        let mut buf = vec![0.0; mv.cols()];
        let out: Vec<f64> = (0..mv.rows())
            .map(|i| {
                for ((b, x), r) in buf.iter_mut().zip(mv.row(i)).zip(rv.data()) {
                    *b = x + r;
                }
                logsumexp(&buf)
            })
            .collect();
        Ok(self.derived(Matrix::col_vector(out), Op::LseRowsPlus(m, row), &[m, row]))
    }

    /// Column-wise log-sum-exp of `m + col` with `col` broadcast across columns.
    pub fn lse_cols_plus(&mut self, m: Var, col: Var) -> Result<Var> {
        let (mv, cv) = (self.value(m), self.value(col));
        if cv.cols() != 1 || cv.rows() != mv.rows() {
            return Err(shape_err("lse_cols_plus", mv, cv));
        }
        let mut buf = vec![0.0; mv.rows()];
        let out: Vec<f64> = (0..mv.cols())
            .map(|j| {
                for (i, b) in buf.iter_mut().enumerate() {
                    *b = mv.get(i, j) + cv.data()[i];
                }
                logsumexp(&buf)
            })
            .collect();
        Ok(self.derived(Matrix::row_vector(out), Op::LseColsPlus(m, col), &[m, col]))
    }

    /// Reverse sweep from the scalar `output`.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out = self.value(output);
        if out.shape() != (1, 1) {
            return Err(Error::shape(format!(
                "backward needs a 1x1 output, got {:?}",
                out.shape()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], v: Var, g: Matrix) -> Result<()> {
        if !self.wants(v) {
            return Ok(());
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => {
                *slot = Some(g);
                Ok(())
            }
        }
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) -> Result<()> {
        match node.op {
            Op::Leaf | Op::Const => {}
            Op::MatMul(a, b) => {
                if self.wants(a) {
                    self.accumulate(grads, a, g.matmul_nt(self.value(b))?)?;
                }
                if self.wants(b) {
                    self.accumulate(grads, b, self.value(a).matmul_tn(g)?)?;
                }
            }
            Op::MatMulNt(a, b) => {
                // out = A Bᵀ: dA = G B, dB = Gᵀ A
                if self.wants(a) {
                    self.accumulate(grads, a, g.matmul(self.value(b))?)?;
                }
                if self.wants(b) {
                    self.accumulate(grads, b, g.matmul_tn(self.value(a))?)?;
                }
            }
            Op::Transpose(a) => self.accumulate(grads, a, g.transpose())?,
            Op::Add(a, b) => {
                self.accumulate(grads, a, g.clone())?;
                self.accumulate(grads, b, g.clone())?;
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, a, g.clone())?;
                self.accumulate(grads, b, g.scale(-1.0))?;
            }
            Op::Mul(a, b) => {
                if self.wants(a) {
                    self.accumulate(grads, a, g.zip_map(self.value(b), |x, y| x * y)?)?;
                }
                if self.wants(b) {
                    self.accumulate(grads, b, g.zip_map(self.value(a), |x, y| x * y)?)?;
                }
            }
            Op::Scale(a, s) => self.accumulate(grads, a, g.scale(s))?,
            Op::AddScalar(a) => self.accumulate(grads, a, g.clone())?,
            Op::AddRow(a, r) => {
                self.accumulate(grads, a, g.clone())?;
                if self.wants(r) {
                    self.accumulate(grads, r, g.col_sums())?;
                }
            }
            Op::AddCol(a, c) => {
                self.accumulate(grads, a, g.clone())?;
                if self.wants(c) {
                    self.accumulate(grads, c, g.row_sums())?;
                }
            }
            Op::Exp(a) => self.accumulate(grads, a, g.zip_map(&node.value, |x, y| x * y)?)?,
            Op::Log(a) => self.accumulate(grads, a, g.zip_map(self.value(a), |x, y| x / y)?)?,
            Op::Softplus(a) => {
                self.accumulate(grads, a, g.zip_map(self.value(a), |x, y| x * sigmoid(y))?)?
            }
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let mut d = Matrix::zeros(y.rows(), y.cols());
                for i in 0..y.rows() {
                    let (yr, gr) = (y.row(i), g.row(i));
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for ((o, p), q) in d.row_mut(i).iter_mut().zip(yr).zip(gr) {
                        *o = p * (q - dot);
                    }
                }
                self.accumulate(grads, a, d)?;
            }
            Op::LogSoftmaxRows(a) => {
                let y = &node.value;
                let mut d = Matrix::zeros(y.rows(), y.cols());
                for i in 0..y.rows() {
                    let (yr, gr) = (y.row(i), g.row(i));
                    let total: f64 = gr.iter().sum();
                    for ((o, ly), q) in d.row_mut(i).iter_mut().zip(yr).zip(gr) {
                        *o = q - ly.exp() * total;
                    }
                }
                self.accumulate(grads, a, d)?;
            }
            Op::Sum(a) => {
                let (r, c) = self.value(a).shape();
                self.accumulate(grads, a, Matrix::filled(r, c, g.item()))?;
            }
            Op::SumRows(a) => {
                let (r, c) = self.value(a).shape();
                let mut d = Matrix::zeros(r, c);
                for i in 0..r {
                    let gi = g.data()[i];
                    d.row_mut(i).iter_mut().for_each(|x| *x = gi);
                }
                self.accumulate(grads, a, d)?;
            }
            Op::SumCols(a) => {
                let (r, c) = self.value(a).shape();
                let mut d = Matrix::zeros(r, c);
                for i in 0..r {
                    d.row_mut(i).copy_from_slice(g.data());
                }
                self.accumulate(grads, a, d)?;
            }
            Op::SqDist(a, b) => {
                let (av, bv) = (self.value(a), self.value(b));
                if self.wants(a) {
                    // dA = 2 (A diag(rowsum G) − B Gᵀ)
                    let rs = g.row_sums();
                    let mut d = bv.matmul_nt(g)?.scale(-2.0);
                    for r in 0..d.rows() {
                        for i in 0..d.cols() {
                            let v = d.get(r, i) + 2.0 * av.get(r, i) * rs.data()[i];
                            d.set(r, i, v);
                        }
                    }
                    self.accumulate(grads, a, d)?;
                }
                if self.wants(b) {
                    // dB = 2 (B diag(colsum G) − A G)
                    let cs = g.col_sums();
                    let mut d = av.matmul(g)?.scale(-2.0);
                    for r in 0..d.rows() {
                        for j in 0..d.cols() {
                            let v = d.get(r, j) + 2.0 * bv.get(r, j) * cs.data()[j];
                            d.set(r, j, v);
                        }
                    }
                    self.accumulate(grads, b, d)?;
                }
            }
            Op::LseRowsPlus(m, row) => {
                let (mv, rv) = (self.value(m), self.value(row));
                let mut dm = Matrix::zeros(mv.rows(), mv.cols());
                for i in 0..mv.rows() {
                    let (lse, gi) = (node.value.data()[i], g.data()[i]);
                    for ((o, x), r) in dm.row_mut(i).iter_mut().zip(mv.row(i)).zip(rv.data()) {
                        *o = gi * (x + r - lse).exp();
                    }
                }
                if self.wants(row) {
                    self.accumulate(grads, row, dm.col_sums())?;
                }
                self.accumulate(grads, m, dm)?;
            }
            Op::LseColsPlus(m, col) => {
                let (mv, cv) = (self.value(m), self.value(col));
                let mut dm = Matrix::zeros(mv.rows(), mv.cols());
                for i in 0..mv.rows() {
                    let u = cv.data()[i];
                    for (j, (o, x)) in dm.row_mut(i).iter_mut().zip(mv.row(i)).enumerate() {
                        *o = g.data()[j] * (x + u - node.value.data()[j]).exp();
                    }
                }
                if self.wants(col) {
                    self.accumulate(grads, col, dm.row_sums())?;
                }
                self.accumulate(grads, m, dm)?;
            }
        }
        Ok(())
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
