//! Tape-based reverse-mode differentiation over [`Matrix`] values.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::Adjacency;
use crate::metrics;
use crate::params::{ParamId, ParamStore};
use crate::tensor::{self, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op<'a> {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Relu(Var),
    NeighborMean(Var, &'a Adjacency),
    MeanRows(Var),
    WeightedSum { terms: Vec<(Var, f64)>, divisor: f64 },
    Scale(Var, f64),
    SumAll(Var),
    CrossEntropy { logits: Var, class: usize },
    PairwiseHinge { preds: Vec<Var>, targets: Vec<f64>, groups: Vec<u32> },
    MeanOf(Vec<Var>),
}

struct Node<'a> {
    value: Matrix,
    op: Op<'a>,
    requires_grad: bool,
}

/// One forward pass worth of recorded operations.
///
/// `retained_nodes` counts graph nodes whose activations are kept for the
/// backward pass; the trainer checks it against the activation budget.
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
    param_vars: Vec<Option<Var>>,
    retained_nodes: usize,
    backward_visits: usize,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), param_vars: Vec::new(), retained_nodes: 0, backward_visits: 0 }
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

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    pub fn retained_nodes(&self) -> usize {
        self.retained_nodes
    }

    pub fn retain_nodes(&mut self, n: usize) {
        self.retained_nodes += n;
    }

    /// Number of recorded ops visited by the last backward pass.
    pub fn backward_visits(&self) -> usize {
        self.backward_visits
    }

    fn push(&mut self, value: Matrix, op: Op<'a>, inputs: &[Var]) -> Var {
        let requires_grad = match op {
            Op::Param(_) => true,
            Op::Constant => false,
            _ => inputs.iter().any(|v| self.nodes[v.0].requires_grad),
        };
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// A value that gradients do not flow into.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant, &[])
    }

    pub fn param(&mut self, params: &ParamStore, id: ParamId) -> Var {
        if self.param_vars.len() <= id.index() {
            self.param_vars.resize(id.index() + 1, None);
        }
        if let Some(v) = self.param_vars[id.index()] {
            return v;
        }
        let v = self.push(params.value(id).clone(), Op::Param(id), &[]);
        self.param_vars[id.index()] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = tensor::matmul(self.value(a), self.value(b));
        self.push(value, Op::MatMul(a, b), &[a, b])
    }

    pub fn add_row(&mut self, m: Var, row: Var) -> Var {
        let value = tensor::add_row(self.value(m), self.value(row));
        self.push(value, Op::AddRow(m, row), &[m, row])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = tensor::add(self.value(a), self.value(b));
        self.push(value, Op::Add(a, b), &[a, b])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = tensor::relu(self.value(a));
        self.push(value, Op::Relu(a), &[a])
    }

    pub fn neighbor_mean(&mut self, x: Var, adj: &'a Adjacency) -> Var {
        let value = tensor::neighbor_mean(adj, self.value(x));
        self.push(value, Op::NeighborMean(x, adj), &[x])
    }

    pub fn mean_rows(&mut self, x: Var) -> Var {
        let value = tensor::mean_rows(self.value(x));
        self.push(value, Op::MeanRows(x), &[x])
    }

    /// `(Σ wᵢ·xᵢ) / divisor` over 1×d rows.
    pub fn weighted_sum(&mut self, terms: Vec<(Var, f64)>, divisor: f64) -> Var {
        let width = self.value(terms[0].0).cols();
        let rows: Vec<(&[f64], f64)> = terms.iter().map(|&(v, w)| (self.value(v).data(), w)).collect();
        let value = Matrix::row_vector(tensor::weighted_sum(&rows, width, divisor));
        let inputs: Vec<Var> = terms.iter().map(|t| t.0).collect();
        self.push(value, Op::WeightedSum { terms, divisor }, &inputs)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let mut value = self.value(a).clone();
        value.data_mut().iter_mut().for_each(|x| *x *= k);
        self.push(value, Op::Scale(a, k), &[a])
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Matrix::row_vector(vec![s]), Op::SumAll(a), &[a])
    }

    pub fn cross_entropy(&mut self, logits: Var, class: usize) -> Result<Var> {
        let (loss, _) = metrics::cross_entropy_with_grad(self.value(logits).data(), class)?;
        Ok(self.push(Matrix::row_vector(vec![loss]), Op::CrossEntropy { logits, class }, &[logits]))
    }

    /// Pairwise hinge over scalar predictions; only pairs sharing a group id count.
    pub fn pairwise_hinge(&mut self, preds: Vec<Var>, targets: Vec<f64>, groups: Vec<u32>) -> Var {
        let p: Vec<f64> = preds.iter().map(|&v| self.scalar(v)).collect();
        let (loss, _) = metrics::grouped_pairwise_hinge_with_grad(&p, &targets, &groups);
        let inputs = preds.clone();
        self.push(Matrix::row_vector(vec![loss]), Op::PairwiseHinge { preds, targets, groups }, &inputs)
    }

    /// Arithmetic mean of 1×1 values.
    pub fn mean_of(&mut self, xs: Vec<Var>) -> Var {
        let s: f64 = xs.iter().map(|&v| self.scalar(v)).sum::<f64>() / xs.len() as f64;
        let inputs = xs.clone();
        self.push(Matrix::row_vector(vec![s]), Op::MeanOf(xs), &inputs)
    }

    /// Accumulates `d loss / d θ` into the gradient buffers of `params`.
    pub fn backward(&mut self, loss: Var, params: &mut ParamStore) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::EmptyTape);
        }
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::InvalidArgument("loss must be a scalar".into()));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::row_vector(vec![1.0]));
        let mut visits = 0;
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            visits += 1;
            let mut acc = |v: Var, delta: Matrix| match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            };
            let val = |v: Var| &self.nodes[v.0].value;
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => params.grad_mut(*id).add_assign(&g),
                Op::MatMul(a, b) => {
                    acc(*a, tensor::matmul_nt(&g, val(*b)));
                    acc(*b, tensor::matmul_tn(val(*a), &g));
                }
                Op::AddRow(m, row) => {
                    let mut rg = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, x) in rg.data_mut().iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    acc(*row, rg);
                    acc(*m, g);
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g);
                }
                Op::Relu(a) => {
                    let mut d = g;
                    for (x, y) in d.data_mut().iter_mut().zip(node.value.data()) {
                        if *y <= 0.0 {
                            *x = 0.0;
                        }
                    }
                    acc(*a, d);
                }
                Op::NeighborMean(x, adj) => acc(*x, tensor::neighbor_mean_backward(adj, &g)),
                Op::MeanRows(x) => {
                    let rows = val(*x).rows();
                    let mut d = Matrix::zeros(rows, g.cols());
                    for r in 0..rows {
                        for (o, gv) in d.row_mut(r).iter_mut().zip(g.data()) {
                            *o = gv / rows as f64;
                        }
                    }
                    acc(*x, d);
                }
                Op::WeightedSum { terms, divisor } => {
                    for &(v, w) in terms {
                        let mut d = g.clone();
                        d.data_mut().iter_mut().for_each(|x| *x = *x * w / divisor);
                        acc(v, d);
                    }
                }
                Op::Scale(a, k) => {
                    let mut d = g;
                    d.data_mut().iter_mut().for_each(|x| *x *= k);
                    acc(*a, d);
                }
                Op::SumAll(a) => {
                    let (r, c) = val(*a).shape();
                    let mut d = Matrix::zeros(r, c);
                    d.fill(g.data()[0]);
                    acc(*a, d);
                }
                Op::CrossEntropy { logits, class } => {
                    let (_, mut d) = metrics::cross_entropy_with_grad(val(*logits).data(), *class)?;
                    d.iter_mut().for_each(|x| *x *= g.data()[0]);
                    acc(*logits, Matrix::row_vector(d));
                }
                Op::PairwiseHinge { preds, targets, groups } => {
                    let p: Vec<f64> = preds.iter().map(|&v| val(v).data()[0]).collect();
                    let (_, d) = metrics::grouped_pairwise_hinge_with_grad(&p, targets, groups);
                    for (&v, dv) in preds.iter().zip(d) {
                        acc(v, Matrix::row_vector(vec![dv * g.data()[0]]));
                    }
                }
                Op::MeanOf(xs) => {
                    let k = g.data()[0] / xs.len() as f64;
                    for &v in xs {
                        acc(v, Matrix::row_vector(vec![k]));
                    }
                }
            }
        }
        self.backward_visits = visits;
        Ok(())
    }
}
