//! Dense row-major matrices and the numeric kernels shared by the taped and
//! untaped forward paths. Both paths call the same functions in the same
//! order, so their results are bit-identical.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::graph::Adjacency;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    /// Builds a matrix from equally sized rows. `cols` is used when `rows` is empty.
    pub fn from_rows(rows: &[Vec<f64>], cols: usize) -> Option<Self> {
        let cols = rows.first().map_or(cols, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return None;
        }
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Some(Self { rows: rows.len(), cols, data })
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        Self { rows: 1, cols: data.len(), data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Gathers the listed rows into a new matrix.
    pub fn select_rows(&self, idx: &[u32]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i as usize));
        }
        Self { rows: idx.len(), cols: self.cols, data }
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }
}

/// `a (n×k) · b (k×m)`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    debug_assert_eq!(a.cols, b.rows);
    let (n, k, m) = (a.rows, a.cols, b.cols);
    let mut out = Matrix::zeros(n, m);
    for i in 0..n {
        let arow = &a.data[i * k..(i + 1) * k];
        let orow = &mut out.data[i * m..(i + 1) * m];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b.data[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `aᵀ · g` where `a` is n×k and `g` is n×m.
pub fn matmul_tn(a: &Matrix, g: &Matrix) -> Matrix {
    debug_assert_eq!(a.rows, g.rows);
    let (n, k, m) = (a.rows, a.cols, g.cols);
    let mut out = Matrix::zeros(k, m);
    for i in 0..n {
        let arow = &a.data[i * k..(i + 1) * k];
        let grow = &g.data[i * m..(i + 1) * m];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out.data[p * m..(p + 1) * m];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
    out
}

/// `g · bᵀ` where `g` is n×m and `b` is k×m.
pub fn matmul_nt(g: &Matrix, b: &Matrix) -> Matrix {
    debug_assert_eq!(g.cols, b.cols);
    let (n, m, k) = (g.rows, g.cols, b.rows);
    let mut out = Matrix::zeros(n, k);
    for i in 0..n {
        let grow = &g.data[i * m..(i + 1) * m];
        for p in 0..k {
            let brow = &b.data[p * m..(p + 1) * m];
            out.data[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// Adds a 1×m row to every row of `m`.
pub fn add_row(m: &Matrix, row: &Matrix) -> Matrix {
    debug_assert_eq!(row.rows, 1);
    debug_assert_eq!(row.cols, m.cols);
    let mut out = m.clone();
    for r in out.data.chunks_mut(m.cols.max(1)) {
        for (o, b) in r.iter_mut().zip(&row.data) {
            *o += b;
        }
    }
    out
}

pub fn add(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = a.clone();
    out.add_assign(b);
    out
}

pub fn relu(m: &Matrix) -> Matrix {
    let data = m.data.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
    Matrix { rows: m.rows, cols: m.cols, data }
}

/// Row `v` of the result is the mean of `x` over the neighbours of `v`, or
/// zero for isolated nodes.
pub fn neighbor_mean(adj: &Adjacency, x: &Matrix) -> Matrix {
    debug_assert_eq!(adj.node_count(), x.rows);
    let c = x.cols;
    let mut out = Matrix::zeros(x.rows, c);
    for v in 0..x.rows {
        let nbrs = adj.neighbors(v);
        if nbrs.is_empty() {
            continue;
        }
        let orow = &mut out.data[v * c..(v + 1) * c];
        for &u in nbrs {
            for (o, xv) in orow.iter_mut().zip(x.row(u as usize)) {
                *o += xv;
            }
        }
        let deg = nbrs.len() as f64;
        orow.iter_mut().for_each(|o| *o /= deg);
    }
    out
}

/// Adjoint of [`neighbor_mean`].
pub fn neighbor_mean_backward(adj: &Adjacency, g: &Matrix) -> Matrix {
    let c = g.cols;
    let mut out = Matrix::zeros(g.rows, c);
    for v in 0..g.rows {
        let nbrs = adj.neighbors(v);
        if nbrs.is_empty() {
            continue;
        }
        let deg = nbrs.len() as f64;
        for &u in nbrs {
            let u = u as usize;
            for k in 0..c {
                out.data[u * c + k] += g.data[v * c + k] / deg;
            }
        }
    }
    out
}

/// Column means as a 1×c matrix.
pub fn mean_rows(x: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(1, x.cols);
    for r in 0..x.rows {
        for (o, v) in out.data.iter_mut().zip(x.row(r)) {
            *o += v;
        }
    }
    let n = x.rows as f64;
    if x.rows > 0 {
        out.data.iter_mut().for_each(|o| *o /= n);
    }
    out
}

/// `(Σ wᵢ·vᵢ) / divisor`, summed in the given order.
pub fn weighted_sum(terms: &[(&[f64], f64)], width: usize, divisor: f64) -> Vec<f64> {
    let mut acc = vec![0.0; width];
    for (v, w) in terms {
        for (a, x) in acc.iter_mut().zip(v.iter()) {
            *a += w * x;
        }
    }
    if divisor != 1.0 {
        acc.iter_mut().for_each(|a| *a /= divisor);
    }
    acc
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
