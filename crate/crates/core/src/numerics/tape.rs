//! Reverse-mode differentiation over a fixed set of matrix primitives.
//!
//! Every primitive is recorded in forward order together with whatever its
//! backward rule needs. `backward` walks the record in exact reverse order
//! and accumulates gradients additively, so a node used twice receives the
//! sum of both contributions.
//!
//! Non-differentiable points use the zero subgradient: the Euclidean distance
//! at zero separation, and the row normalization of an all-zero row.

use rand::Rng;

use super::{dense, spmm, DenseMatrix, SparseFeatures};
use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<'a> {
    Param,
    Constant,
    MatMul(Var, Var),
    SparseMatMul(&'a SparseFeatures, Var),
    Spmm(&'a NormalizedAdjacency, Var),
    Transpose(Var),
    Relu(Var),
    Dropout(Var, Vec<f64>),
    Scale(Var, f64),
    Add(Var, Var),
    AddScalar(Var),
    SubRow(Var, Var),
    MeanRows(Var),
    WeightedRowSum(Var, Vec<Vec<(usize, f64)>>),
    PairwiseDistance(Var, Var),
    Exp(Var),
    MaxOffDiagonal(Var, Vec<Option<usize>>),
    RowNormalize(Var, Vec<f64>),
    RowSoftmax(Var),
    CrossEntropy(Var, Vec<(usize, usize)>),
    Mean(Var),
    Sum(Var),
    SumSquares(Var),
}

impl Op<'_> {
    fn name(&self) -> &'static str {
        match self {
            Op::Param => "param",
            Op::Constant => "constant",
            Op::MatMul(..) => "matmul",
            Op::SparseMatMul(..) => "sparse-matmul",
            Op::Spmm(..) => "spmm",
            Op::Transpose(..) => "transpose",
            Op::Relu(..) => "relu",
            Op::Dropout(..) => "dropout",
            Op::Scale(..) => "scale",
            Op::Add(..) => "add",
            Op::AddScalar(..) => "add-scalar",
            Op::SubRow(..) => "sub-row",
            Op::MeanRows(..) => "mean-rows",
            Op::WeightedRowSum(..) => "weighted-sum",
            Op::PairwiseDistance(..) => "euclidean-distance",
            Op::Exp(..) => "exp",
            Op::MaxOffDiagonal(..) => "max-over-set",
            Op::RowNormalize(..) => "cosine-normalize",
            Op::RowSoftmax(..) => "row-softmax",
            Op::CrossEntropy(..) => "cross-entropy",
            Op::Mean(..) => "mean",
            Op::Sum(..) => "sum",
            Op::SumSquares(..) => "sum-squares",
        }
    }
}

struct Node<'a> {
    value: DenseMatrix,
    op: Op<'a>,
    needs_grad: bool,
}

/// Single-owner record of one forward computation.
#[derive(Default)]
pub struct GradTape<'a> {
    nodes: Vec<Node<'a>>,
}

/// Gradients of a scalar with respect to every tape node that needs one.
pub struct Gradients {
    grads: Vec<Option<DenseMatrix>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&DenseMatrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<DenseMatrix> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl<'a> GradTape<'a> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.nodes[v.0].value
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).get(0, 0)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: DenseMatrix, op: Op<'a>, needs_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NumericFailure { op: op.name() });
        }
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn param(&mut self, value: DenseMatrix) -> Result<Var> {
        self.push(value, Op::Param, true)
    }

    pub fn constant(&mut self, value: DenseMatrix) -> Result<Var> {
        self.push(value, Op::Constant, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::MatMul(a, b), ng)
    }

    /// `features * a` with a constant sparse left operand.
    pub fn sparse_matmul(&mut self, features: &'a SparseFeatures, a: Var) -> Result<Var> {
        let value = features.forward.matmul(self.value(a))?;
        let ng = self.needs(a);
        self.push(value, Op::SparseMatMul(features, a), ng)
    }

    pub fn spmm(&mut self, adj: &'a NormalizedAdjacency, a: Var) -> Result<Var> {
        let value = spmm(adj, self.value(a))?;
        let ng = self.needs(a);
        self.push(value, Op::Spmm(adj, a), ng)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose();
        let ng = self.needs(a);
        self.push(value, Op::Transpose(a), ng)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(|v| v.max(0.0));
        let ng = self.needs(a);
        self.push(value, Op::Relu(a), ng)
    }

    /// Inverted dropout: each entry kept with probability `1 - p` and
    /// scaled by `1 / (1 - p)`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, p: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("dropout rate {p} not in [0, 1)")));
        }
        let keep = 1.0 / (1.0 - p);
        let src = self.value(a);
        let mask: Vec<f64> = (0..src.as_slice().len())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let data = src.as_slice().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let value = DenseMatrix::from_vec(src.rows(), src.cols(), data)?;
        let ng = self.needs(a);
        self.push(value, Op::Dropout(a, mask), ng)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let value = self.value(a).scale(s);
        let ng = self.needs(a);
        self.push(value, Op::Scale(a, s), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::Add(a, b), ng)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Result<Var> {
        let value = self.value(a).map(|v| v + s);
        let ng = self.needs(a);
        self.push(value, Op::AddScalar(a), ng)
    }

    /// `a - 1 * row`, with `row` of shape `1 x cols(a)`.
    pub fn sub_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, r) = (self.value(a), self.value(row));
        if r.rows() != 1 || r.cols() != m.cols() {
            return Err(Error::dims(
                "sub-row",
                format!("{:?} minus row {:?}", m.shape(), r.shape()),
            ));
        }
        let mut value = m.clone();
        for i in 0..value.rows() {
            for (x, &y) in value.row_mut(i).iter_mut().zip(r.row(0)) {
                *x -= y;
            }
        }
        let ng = self.needs(a) || self.needs(row);
        self.push(value, Op::SubRow(a, row), ng)
    }

    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let m = self.value(a);
        if m.rows() == 0 {
            return Err(Error::dims("mean-rows", "no rows"));
        }
        let mut value = DenseMatrix::zeros(1, m.cols());
        for row in m.row_iter() {
            for (o, &x) in value.row_mut(0).iter_mut().zip(row) {
                *o += x;
            }
        }
        let value = value.scale(1.0 / m.rows() as f64);
        let ng = self.needs(a);
        self.push(value, Op::MeanRows(a), ng)
    }

    /// Output row `g` is `sum_(i, w) in groups[g]  w * a[i]`.
    pub fn weighted_row_sum(&mut self, a: Var, groups: Vec<Vec<(usize, f64)>>) -> Result<Var> {
        let m = self.value(a);
        let mut value = DenseMatrix::zeros(groups.len(), m.cols());
        for (g, members) in groups.iter().enumerate() {
            for &(i, w) in members {
                if i >= m.rows() {
                    return Err(Error::dims("weighted-sum", format!("row {i} of {}", m.rows())));
                }
                for (o, &x) in value.row_mut(g).iter_mut().zip(m.row(i)) {
                    *o += w * x;
                }
            }
        }
        let ng = self.needs(a);
        self.push(value, Op::WeightedRowSum(a, groups), ng)
    }

    /// `out[i][j] = ||a_i - b_j||`.
    pub fn pairwise_distance(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ma, mb) = (self.value(a), self.value(b));
        if ma.cols() != mb.cols() {
            return Err(Error::dims(
                "euclidean-distance",
                format!("{:?} vs {:?}", ma.shape(), mb.shape()),
            ));
        }
        let mut value = DenseMatrix::zeros(ma.rows(), mb.rows());
        for i in 0..ma.rows() {
            for j in 0..mb.rows() {
                value.set(i, j, dense::euclidean(ma.row(i), mb.row(j)));
            }
        }
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::PairwiseDistance(a, b), ng)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(f64::exp);
        let ng = self.needs(a);
        self.push(value, Op::Exp(a), ng)
    }

    /// Per row `i` of a square matrix, `max_{j != i} a[i][j]` as an `n x 1`
    /// column. A 1x1 input yields 0.
    pub fn max_off_diagonal(&mut self, a: Var) -> Result<Var> {
        let m = self.value(a);
        if m.rows() != m.cols() {
            return Err(Error::dims("max-over-set", format!("{:?} not square", m.shape())));
        }
        let n = m.rows();
        let mut value = DenseMatrix::zeros(n, 1);
        let mut arg = Vec::with_capacity(n);
        for i in 0..n {
            let mut best: Option<usize> = None;
            for j in (0..n).filter(|&j| j != i) {
                if best.is_none_or(|b| m.get(i, j) > m.get(i, b)) {
                    best = Some(j);
                }
            }
            if let Some(j) = best {
                value.set(i, 0, m.get(i, j));
            }
            arg.push(best);
        }
        let ng = self.needs(a);
        self.push(value, Op::MaxOffDiagonal(a, arg), ng)
    }

    /// L2-normalize every row; all-zero rows stay zero.
    pub fn row_normalize(&mut self, a: Var) -> Result<Var> {
        let m = self.value(a);
        let mut value = m.clone();
        let mut norms = Vec::with_capacity(m.rows());
        for i in 0..m.rows() {
            let norm = dense::dot(m.row(i), m.row(i)).sqrt();
            norms.push(norm);
            if norm > 0.0 {
                value.row_mut(i).iter_mut().for_each(|x| *x /= norm);
            }
        }
        let ng = self.needs(a);
        self.push(value, Op::RowNormalize(a, norms), ng)
    }

    pub fn row_softmax(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).row_softmax();
        let ng = self.needs(a);
        self.push(value, Op::RowSoftmax(a), ng)
    }

    /// Mean over `targets` of `-log softmax(a[row])[label]`.
    pub fn cross_entropy(&mut self, a: Var, targets: Vec<(usize, usize)>) -> Result<Var> {
        let m = self.value(a);
        if targets.is_empty() {
            return Err(Error::InvalidArgument("cross-entropy over zero rows".into()));
        }
        let mut total = 0.0;
        for &(r, y) in &targets {
            if r >= m.rows() || y >= m.cols() {
                return Err(Error::dims(
                    "cross-entropy",
                    format!("target ({r}, {y}) outside {:?}", m.shape()),
                ));
            }
            total += log_sum_exp(m.row(r)) - m.get(r, y);
        }
        let value = DenseMatrix::filled(1, 1, total / targets.len() as f64);
        let ng = self.needs(a);
        self.push(value, Op::CrossEntropy(a, targets), ng)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let m = self.value(a);
        let n = m.as_slice().len();
        if n == 0 {
            return Err(Error::dims("mean", "empty matrix"));
        }
        let value = DenseMatrix::filled(1, 1, m.sum() / n as f64);
        let ng = self.needs(a);
        self.push(value, Op::Mean(a), ng)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let value = DenseMatrix::filled(1, 1, self.value(a).sum());
        let ng = self.needs(a);
        self.push(value, Op::Sum(a), ng)
    }

    pub fn sum_squares(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).as_slice().iter().map(|x| x * x).sum();
        let ng = self.needs(a);
        self.push(DenseMatrix::filled(1, 1, s), Op::SumSquares(a), ng)
    }

    /// Gradients of the 1x1 node `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::dims(
                "backward",
                format!("loss has shape {:?}", self.value(loss).shape()),
            ));
        }
        let mut grads: Vec<Option<DenseMatrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(DenseMatrix::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !g.is_finite() {
                return Err(Error::NumericFailure { op: node.op.name() });
            }
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<DenseMatrix>], v: Var, contrib: DenseMatrix) {
        if !self.needs(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.axpy(1.0, &contrib),
            slot @ None => *slot = Some(contrib),
        }
    }

    fn propagate(&self, node: &Node<'a>, g: &DenseMatrix, grads: &mut [Option<DenseMatrix>]) -> Result<()> {
        let out = &node.value;
        match &node.op {
            Op::Param | Op::Constant => {}
            Op::MatMul(a, b) => {
                if self.needs(*a) {
                    let da = g.matmul_t(self.value(*b))?;
                    self.accumulate(grads, *a, da);
                }
                if self.needs(*b) {
                    let db = self.value(*a).t_matmul(g)?;
                    self.accumulate(grads, *b, db);
                }
            }
            Op::SparseMatMul(features, a) => {
                let da = features.transposed.matmul(g)?;
                self.accumulate(grads, *a, da);
            }
            Op::Spmm(adj, a) => {
                // the normalized operator is exactly symmetric
                let da = spmm(adj, g)?;
                self.accumulate(grads, *a, da);
            }
            Op::Transpose(a) => self.accumulate(grads, *a, g.transpose()),
            Op::Relu(a) => {
                let src = self.value(*a).as_slice();
                let data = g
                    .as_slice()
                    .iter()
                    .zip(src)
                    .map(|(&d, &x)| if x > 0.0 { d } else { 0.0 })
                    .collect();
                self.accumulate(grads, *a, DenseMatrix::from_vec(g.rows(), g.cols(), data)?);
            }
            Op::Dropout(a, mask) => {
                let data = g.as_slice().iter().zip(mask).map(|(d, m)| d * m).collect();
                self.accumulate(grads, *a, DenseMatrix::from_vec(g.rows(), g.cols(), data)?);
            }
            Op::Scale(a, s) => self.accumulate(grads, *a, g.scale(*s)),
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::AddScalar(a) => self.accumulate(grads, *a, g.clone()),
            Op::SubRow(a, row) => {
                self.accumulate(grads, *a, g.clone());
                if self.needs(*row) {
                    let mut dr = DenseMatrix::zeros(1, g.cols());
                    for r in g.row_iter() {
                        for (o, &x) in dr.row_mut(0).iter_mut().zip(r) {
                            *o -= x;
                        }
                    }
                    self.accumulate(grads, *row, dr);
                }
            }
            Op::MeanRows(a) => {
                let n = self.value(*a).rows();
                let mut da = DenseMatrix::zeros(n, g.cols());
                let share = g.scale(1.0 / n as f64);
                for i in 0..n {
                    da.row_mut(i).copy_from_slice(share.row(0));
                }
                self.accumulate(grads, *a, da);
            }
            Op::WeightedRowSum(a, groups) => {
                let src = self.value(*a);
                let mut da = DenseMatrix::zeros(src.rows(), src.cols());
                for (gi, members) in groups.iter().enumerate() {
                    for &(i, w) in members {
                        for (o, &x) in da.row_mut(i).iter_mut().zip(g.row(gi)) {
                            *o += w * x;
                        }
                    }
                }
                self.accumulate(grads, *a, da);
            }
            Op::PairwiseDistance(a, b) => {
                let (ma, mb) = (self.value(*a), self.value(*b));
                let mut da = DenseMatrix::zeros(ma.rows(), ma.cols());
                let mut db = DenseMatrix::zeros(mb.rows(), mb.cols());
                for i in 0..ma.rows() {
                    for j in 0..mb.rows() {
                        let d = out.get(i, j);
                        let upstream = g.get(i, j);
                        if d <= 0.0 || upstream == 0.0 {
                            continue;
                        }
                        let coeff = upstream / d;
                        for k in 0..ma.cols() {
                            let diff = coeff * (ma.get(i, k) - mb.get(j, k));
                            da.row_mut(i)[k] += diff;
                            db.row_mut(j)[k] -= diff;
                        }
                    }
                }
                self.accumulate(grads, *a, da);
                self.accumulate(grads, *b, db);
            }
            Op::Exp(a) => {
                let data = g.as_slice().iter().zip(out.as_slice()).map(|(d, y)| d * y).collect();
                self.accumulate(grads, *a, DenseMatrix::from_vec(g.rows(), g.cols(), data)?);
            }
            Op::MaxOffDiagonal(a, arg) => {
                let n = self.value(*a).rows();
                let mut da = DenseMatrix::zeros(n, n);
                for (i, j) in arg.iter().enumerate() {
                    if let Some(j) = j {
                        da.set(i, *j, g.get(i, 0));
                    }
                }
                self.accumulate(grads, *a, da);
            }
            Op::RowNormalize(a, norms) => {
                let mut da = DenseMatrix::zeros(out.rows(), out.cols());
                for (i, &norm) in norms.iter().enumerate() {
                    if norm <= 0.0 {
                        continue;
                    }
                    let y = out.row(i);
                    let proj = dense::dot(y, g.row(i));
                    for ((o, &yk), &gk) in da.row_mut(i).iter_mut().zip(y).zip(g.row(i)) {
                        *o = (gk - yk * proj) / norm;
                    }
                }
                self.accumulate(grads, *a, da);
            }
            Op::RowSoftmax(a) => {
                let mut da = DenseMatrix::zeros(out.rows(), out.cols());
                for i in 0..out.rows() {
                    let y = out.row(i);
                    let proj = dense::dot(y, g.row(i));
                    for ((o, &yk), &gk) in da.row_mut(i).iter_mut().zip(y).zip(g.row(i)) {
                        *o = yk * (gk - proj);
                    }
                }
                self.accumulate(grads, *a, da);
            }
            Op::CrossEntropy(a, targets) => {
                let src = self.value(*a);
                let mut da = DenseMatrix::zeros(src.rows(), src.cols());
                let w = g.get(0, 0) / targets.len() as f64;
                for &(r, y) in targets {
                    let mut p = src.row(r).to_vec();
                    dense::softmax_in_place(&mut p);
                    p[y] -= 1.0;
                    for (o, pk) in da.row_mut(r).iter_mut().zip(p) {
                        *o += w * pk;
                    }
                }
                self.accumulate(grads, *a, da);
            }
            Op::Mean(a) => {
                let src = self.value(*a);
                let n = src.as_slice().len() as f64;
                let da = DenseMatrix::filled(src.rows(), src.cols(), g.get(0, 0) / n);
                self.accumulate(grads, *a, da);
            }
            Op::Sum(a) => {
                let src = self.value(*a);
                self.accumulate(grads, *a, DenseMatrix::filled(src.rows(), src.cols(), g.get(0, 0)));
            }
            Op::SumSquares(a) => {
                let da = self.value(*a).scale(2.0 * g.get(0, 0));
                self.accumulate(grads, *a, da);
            }
        }
        Ok(())
    }
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
