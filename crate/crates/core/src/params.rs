//! Named parameter tensors with gradient buffers and adaptive-moment state.

use alloc::string::String;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
    pub grad: Matrix,
    /// First and second moment estimates.
    pub m: Matrix,
    pub v: Matrix,
    /// Number of optimizer updates applied to this parameter.
    pub steps: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        let (r, c) = value.shape();
        self.params.push(Param {
            name: name.into(),
            value,
            grad: Matrix::zeros(r, c),
            m: Matrix::zeros(r, c),
            v: Matrix::zeros(r, c),
            steps: 0,
        });
        ParamId(self.params.len() - 1)
    }

    /// Glorot-uniform initialization in ±sqrt(6 / (fan_in + fan_out)).
    pub fn add_glorot(&mut self, name: impl Into<String>, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> ParamId {
        let bound = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
        let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..=bound)).collect();
        self.add(name, Matrix::from_vec(fan_in, fan_out, data))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.params[id.0].grad
    }

    pub fn zero_grads(&mut self) {
        self.params.iter_mut().for_each(|p| p.grad.fill(0.0));
    }

    pub fn by_name(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Total number of scalar entries.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.data().len()).sum()
    }

    /// FNV-1a over the bit patterns of the listed parameter values.
    pub fn fingerprint(&self, ids: impl IntoIterator<Item = ParamId>) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for id in ids {
            for v in self.value(id).data() {
                for b in v.to_bits().to_le_bytes() {
                    h ^= u64::from(b);
                    h = h.wrapping_mul(0x100_0000_01b3);
                }
            }
        }
        h
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 penalty folded into the gradient.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 0.01, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }
}

/// Applies one bias-corrected adaptive-moment update to the selected
/// parameters, then clears every gradient buffer. Nothing is modified when a
/// selected gradient is non-finite.
pub fn optimizer_step(params: &mut ParamStore, config: &AdamConfig, update: impl Fn(ParamId) -> bool) -> Result<()> {
    let selected: Vec<ParamId> = params.ids().filter(|&id| update(id)).collect();
    for &id in &selected {
        if !params.grad(id).is_finite() {
            return Err(Error::NonFiniteGradient(params.get(id).name.clone()));
        }
    }
    for id in selected {
        let p = params.get_mut(id);
        p.steps += 1;
        let t = p.steps as i32;
        let c1 = 1.0 - libm::pow(config.beta1, t as f64);
        let c2 = 1.0 - libm::pow(config.beta2, t as f64);
        let Param { value, grad, m, v, .. } = p;
        for (((x, &g0), mi), vi) in value
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(m.data_mut().iter_mut())
            .zip(v.data_mut().iter_mut())
        {
            let g = g0 + config.weight_decay * *x;
            *mi = config.beta1 * *mi + (1.0 - config.beta1) * g;
            *vi = config.beta2 * *vi + (1.0 - config.beta2) * g * g;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *x -= config.lr * m_hat / (libm::sqrt(v_hat) + config.eps);
        }
        if !value.is_finite() {
            return Err(Error::NonFiniteGradient(p.name.clone()));
        }
    }
    params.zero_grads();
    Ok(())
}
