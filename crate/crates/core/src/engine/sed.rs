use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use super::plan::Pooling;
use crate::error::{Error, Result};
use crate::tensor;

/// Uniform sample of `min(s, j)` distinct segment indices, ascending.
pub fn sample_segments(j: usize, s: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut picked = rand::seq::index::sample(rng, j, s.min(j)).into_vec();
    picked.sort_unstable();
    picked
}

/// Weight of a gradient segment, `p + (1 − p)·J/S`, evaluated as
/// `(p·S + (1 − p)·J) / S`. It is exactly 1 when every segment is selected
/// or `p = 1`, and exactly `J/S` when `p = 0`.
pub fn gradient_segment_weight(j: usize, s: usize, p: f64) -> f64 {
    if s >= j || p == 1.0 {
        return 1.0;
    }
    (p * s as f64 + (1.0 - p) * j as f64) / s as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct SedAssignment {
    /// Per-segment η: gradient segments get the up-weight, stale segments 0 or 1.
    pub weights: Vec<f64>,
    pub selected: Vec<bool>,
}

impl SedAssignment {
    pub fn dropped(&self) -> usize {
        self.weights.iter().zip(&self.selected).filter(|(w, s)| !**s && **w == 0.0).count()
    }
}

/// Stale embedding dropout weights. Every non-selected segment draws one
/// independent keep decision with probability `p`.
pub fn sed_weights(j: usize, selected: &[usize], p: f64, rng: &mut impl Rng) -> Result<SedAssignment> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(alloc::format!("keep probability {p} outside [0, 1]")));
    }
    if selected.is_empty() || selected.iter().any(|&s| s >= j) {
        return Err(Error::InvalidArgument("selected segments must be a nonempty subset of 0..J".into()));
    }
    let mut mask = vec![false; j];
    for &s in selected {
        mask[s] = true;
    }
    let up = gradient_segment_weight(j, selected.len(), p);
    let weights = mask
        .iter()
        .map(|&sel| {
            if sel {
                up
            } else if rng.gen::<f64>() < p {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Ok(SedAssignment { weights, selected: mask })
}

/// Weighted segment pooling over all `J` segments. Zero-weight terms are
/// skipped, matching the trainer, which never fetches dropped embeddings.
pub fn aggregate(embeddings: &[&[f64]], weights: &[f64], pooling: Pooling) -> Result<Vec<f64>> {
    let j = embeddings.len();
    if weights.len() != j || j == 0 {
        return Err(Error::InvalidArgument("need one weight per embedding".into()));
    }
    let width = embeddings[0].len();
    if let Some(e) = embeddings.iter().find(|e| e.len() != width) {
        return Err(Error::WidthMismatch { expected: width, found: e.len() });
    }
    let terms: Vec<(&[f64], f64)> =
        embeddings.iter().zip(weights).filter(|(_, &w)| w != 0.0).map(|(e, &w)| (*e, w)).collect();
    let divisor = match pooling {
        Pooling::Mean => j as f64,
        Pooling::Sum => 1.0,
    };
    Ok(tensor::weighted_sum(&terms, width, divisor))
}
