//! Mean-aggregation message-passing backbone and MLP prediction head.

use alloc::format;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::Adjacency;
use crate::params::{ParamId, ParamStore};
use crate::partition::Segment;
use crate::rng::{self, SegRng};
use crate::tensor::{self, Matrix};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub pre_layers: usize,
    pub message_passing_layers: usize,
    pub post_layers: usize,
    pub head_hidden: Vec<usize>,
    /// Number of classes, or 1 for scalar regression.
    pub output_dim: usize,
}

impl ModelConfig {
    /// Pre-layer, two message-passing layers, post-layer, one hidden head layer.
    pub fn sage(input_dim: usize, hidden_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            pre_layers: 1,
            message_passing_layers: 2,
            post_layers: 1,
            head_hidden: alloc::vec![hidden_dim],
            output_dim,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub relu: bool,
}

impl Dense {
    fn eval(&self, params: &ParamStore, x: &Matrix) -> Matrix {
        let y = tensor::add_row(&tensor::matmul(x, params.value(self.weight)), params.value(self.bias));
        if self.relu { tensor::relu(&y) } else { y }
    }

    fn record<'a>(&self, params: &ParamStore, tape: &mut Tape<'a>, x: Var) -> Var {
        let w = tape.param(params, self.weight);
        let b = tape.param(params, self.bias);
        let xw = tape.matmul(x, w);
        let y = tape.add_row(xw, b);
        if self.relu { tape.relu(y) } else { y }
    }
}

/// `relu([x ‖ mean_nbr(x)]·W + b)`, with `W` stored as its self and
/// neighbour halves.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SageLayer {
    pub self_weight: ParamId,
    pub neighbor_weight: ParamId,
    pub bias: ParamId,
}

impl SageLayer {
    fn eval(&self, params: &ParamStore, adj: &Adjacency, x: &Matrix) -> Matrix {
        let a = tensor::matmul(x, params.value(self.self_weight));
        let m = tensor::neighbor_mean(adj, x);
        let b = tensor::matmul(&m, params.value(self.neighbor_weight));
        let c = tensor::add(&a, &b);
        tensor::relu(&tensor::add_row(&c, params.value(self.bias)))
    }

    fn record<'a>(&self, params: &ParamStore, tape: &mut Tape<'a>, adj: &'a Adjacency, x: Var) -> Var {
        let ws = tape.param(params, self.self_weight);
        let wn = tape.param(params, self.neighbor_weight);
        let bias = tape.param(params, self.bias);
        let a = tape.matmul(x, ws);
        let m = tape.neighbor_mean(x, adj);
        let b = tape.matmul(m, wn);
        let c = tape.add(a, b);
        let d = tape.add_row(c, bias);
        tape.relu(d)
    }
}

#[derive(Debug)]
pub struct Backbone {
    pub pre: Vec<Dense>,
    pub layers: Vec<SageLayer>,
    pub post: Vec<Dense>,
    pub input_dim: usize,
    pub embed_dim: usize,
    forwarded_nodes: AtomicU64,
}

impl Clone for Backbone {
    fn clone(&self) -> Self {
        Self {
            pre: self.pre.clone(),
            layers: self.layers.clone(),
            post: self.post.clone(),
            input_dim: self.input_dim,
            embed_dim: self.embed_dim,
            forwarded_nodes: AtomicU64::new(self.forwarded_nodes()),
        }
    }
}

impl Backbone {
    /// Total nodes pushed through the backbone so far, in either mode.
    pub fn forwarded_nodes(&self) -> u64 {
        self.forwarded_nodes.load(Ordering::Relaxed)
    }

    fn check_width(&self, features: &Matrix) -> Result<()> {
        if features.cols() != self.input_dim {
            return Err(Error::WidthMismatch { expected: self.input_dim, found: features.cols() });
        }
        Ok(())
    }

    /// Segment embedding without recording anything (stop-gradient path).
    pub fn embed(&self, params: &ParamStore, segment: &Segment) -> Result<Vec<f64>> {
        self.embed_raw(params, &segment.adjacency, &segment.features)
    }

    pub fn embed_raw(&self, params: &ParamStore, adj: &Adjacency, features: &Matrix) -> Result<Vec<f64>> {
        self.check_width(features)?;
        self.forwarded_nodes.fetch_add(features.rows() as u64, Ordering::Relaxed);
        let mut h = features.clone();
        for d in &self.pre {
            h = d.eval(params, &h);
        }
        for l in &self.layers {
            h = l.eval(params, adj, &h);
        }
        for d in &self.post {
            h = d.eval(params, &h);
        }
        Ok(tensor::mean_rows(&h).into_data())
    }

    /// Segment embedding recorded on `tape`; the segment's nodes count as
    /// retained activations.
    pub fn forward<'a>(&self, params: &ParamStore, segment: &'a Segment, tape: &mut Tape<'a>) -> Result<Var> {
        self.check_width(&segment.features)?;
        let n = segment.node_count();
        self.forwarded_nodes.fetch_add(n as u64, Ordering::Relaxed);
        tape.retain_nodes(n);
        let mut h = tape.constant(segment.features.clone());
        for d in &self.pre {
            h = d.record(params, tape, h);
        }
        for l in &self.layers {
            h = l.record(params, tape, &segment.adjacency, h);
        }
        for d in &self.post {
            h = d.record(params, tape, h);
        }
        Ok(tape.mean_rows(h))
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = Vec::new();
        for d in &self.pre {
            ids.extend([d.weight, d.bias]);
        }
        for l in &self.layers {
            ids.extend([l.self_weight, l.neighbor_weight, l.bias]);
        }
        for d in &self.post {
            ids.extend([d.weight, d.bias]);
        }
        ids
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Head {
    pub layers: Vec<Dense>,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl Head {
    pub fn predict(&self, params: &ParamStore, embedding: &[f64]) -> Result<Vec<f64>> {
        if embedding.len() != self.input_dim {
            return Err(Error::WidthMismatch { expected: self.input_dim, found: embedding.len() });
        }
        let mut h = Matrix::row_vector(embedding.to_vec());
        for d in &self.layers {
            h = d.eval(params, &h);
        }
        Ok(h.into_data())
    }

    pub fn forward(&self, params: &ParamStore, tape: &mut Tape<'_>, embedding: Var) -> Result<Var> {
        let width = tape.value(embedding).cols();
        if width != self.input_dim {
            return Err(Error::WidthMismatch { expected: self.input_dim, found: width });
        }
        let mut h = embedding;
        for d in &self.layers {
            h = d.record(params, tape, h);
        }
        Ok(h)
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|d| [d.weight, d.bias]).collect()
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub backbone: Backbone,
    pub head: Head,
    pub params: ParamStore,
}

/// Creates parameters in a fixed order so a structure can be re-derived from
/// a stored [`ParamStore`].
struct Builder<'s> {
    store: &'s mut ParamStore,
    rng: Option<SegRng>,
    next: usize,
}

impl Builder<'_> {
    fn param(&mut self, name: &str, rows: usize, cols: usize, zero: bool) -> Result<ParamId> {
        let id = match &mut self.rng {
            Some(rng) if !zero => self.store.add_glorot(name, rows, cols, rng),
            Some(_) => self.store.add(name, Matrix::zeros(rows, cols)),
            None => {
                let id = self
                    .store
                    .ids()
                    .nth(self.next)
                    .ok_or_else(|| Error::InvalidArgument(format!("missing parameter `{name}`")))?;
                let p = self.store.get(id);
                if p.name != name || p.value.shape() != (rows, cols) {
                    return Err(Error::InvalidArgument(format!("parameter `{name}` does not match the model layout")));
                }
                id
            }
        };
        self.next += 1;
        Ok(id)
    }

    fn dense(&mut self, name: &str, fan_in: usize, fan_out: usize, relu: bool) -> Result<Dense> {
        Ok(Dense {
            weight: self.param(&format!("{name}.weight"), fan_in, fan_out, false)?,
            bias: self.param(&format!("{name}.bias"), 1, fan_out, true)?,
            relu,
        })
    }
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut store = ParamStore::new();
        let rng = rng::stream(seed, rng::streams::INIT);
        let (backbone, head) = Self::layout(&config, &mut Builder { store: &mut store, rng: Some(rng), next: 0 })?;
        Ok(Self { config, backbone, head, params: store })
    }

    /// Rebuilds a model around previously saved parameters.
    pub fn from_params(config: ModelConfig, mut params: ParamStore) -> Result<Self> {
        let (backbone, head) = Self::layout(&config, &mut Builder { store: &mut params, rng: None, next: 0 })?;
        if params.len() != backbone.param_ids().len() + head.param_ids().len() {
            return Err(Error::InvalidArgument("parameter count does not match the model layout".into()));
        }
        Ok(Self { config, backbone, head, params })
    }

    fn layout(c: &ModelConfig, b: &mut Builder<'_>) -> Result<(Backbone, Head)> {
        if c.input_dim == 0 || c.hidden_dim == 0 || c.output_dim == 0 {
            return Err(Error::InvalidArgument("model widths must be positive".into()));
        }
        let mut width = c.input_dim;
        let mut pre = Vec::new();
        for i in 0..c.pre_layers {
            pre.push(b.dense(&format!("backbone.pre{i}"), width, c.hidden_dim, true)?);
            width = c.hidden_dim;
        }
        let mut layers = Vec::new();
        for i in 0..c.message_passing_layers {
            layers.push(SageLayer {
                self_weight: b.param(&format!("backbone.sage{i}.self_weight"), width, c.hidden_dim, false)?,
                neighbor_weight: b.param(&format!("backbone.sage{i}.neighbor_weight"), width, c.hidden_dim, false)?,
                bias: b.param(&format!("backbone.sage{i}.bias"), 1, c.hidden_dim, true)?,
            });
            width = c.hidden_dim;
        }
        let mut post = Vec::new();
        for i in 0..c.post_layers {
            post.push(b.dense(&format!("backbone.post{i}"), width, c.hidden_dim, true)?);
            width = c.hidden_dim;
        }
        let embed_dim = width;
        let backbone =
            Backbone { pre, layers, post, input_dim: c.input_dim, embed_dim, forwarded_nodes: AtomicU64::new(0) };
        let mut head_layers = Vec::new();
        for (i, &h) in c.head_hidden.iter().enumerate() {
            head_layers.push(b.dense(&format!("head.hidden{i}"), width, h, true)?);
            width = h;
        }
        head_layers.push(b.dense("head.out", width, c.output_dim, false)?);
        let head = Head { layers: head_layers, input_dim: embed_dim, output_dim: c.output_dim };
        Ok((backbone, head))
    }

    pub fn embed_dim(&self) -> usize {
        self.backbone.embed_dim
    }
}
