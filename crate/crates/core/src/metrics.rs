//! Losses and evaluation metrics.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// `−log softmax(logits)[class]` and its gradient `softmax − one_hot`.
pub fn cross_entropy_with_grad(logits: &[f64], class: usize) -> Result<(f64, Vec<f64>)> {
    if class >= logits.len() {
        return Err(Error::ClassOutOfRange { class, num_classes: logits.len() });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| libm::exp(z - max)).collect();
    let total: f64 = exps.iter().sum();
    let loss = max + libm::log(total) - logits[class];
    let mut grad: Vec<f64> = exps.iter().map(|e| e / total).collect();
    grad[class] -= 1.0;
    Ok((loss, grad))
}

pub fn cross_entropy(logits: &[f64], class: usize) -> Result<f64> {
    cross_entropy_with_grad(logits, class).map(|(l, _)| l)
}

/// `Σᵢ Σⱼ 𝕀[yᵢ > yⱼ]·max(0, 1 − (ŷᵢ − ŷⱼ))` over one group.
pub fn pairwise_hinge(preds: &[f64], targets: &[f64]) -> Result<f64> {
    if preds.len() != targets.len() {
        return Err(Error::WidthMismatch { expected: targets.len(), found: preds.len() });
    }
    let groups = vec![0; preds.len()];
    Ok(grouped_pairwise_hinge_with_grad(preds, targets, &groups).0)
}

/// Pairwise hinge summed over pairs that share a group id, with its
/// subgradient. The kink contributes zero.
pub fn grouped_pairwise_hinge_with_grad(preds: &[f64], targets: &[f64], groups: &[u32]) -> (f64, Vec<f64>) {
    let n = preds.len();
    let mut loss = 0.0;
    let mut grad = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            if groups[i] != groups[j] || targets[i] <= targets[j] {
                continue;
            }
            let margin = 1.0 - (preds[i] - preds[j]);
            if margin > 0.0 {
                loss += margin;
                grad[i] -= 1.0;
                grad[j] += 1.0;
            }
        }
    }
    (loss, grad)
}

/// Ordered pair accuracy. `None` when no ordered target pair exists.
/// Prediction ties count as incorrectly ordered.
pub fn opa(preds: &[f64], targets: &[f64]) -> Option<f64> {
    let mut num = 0u64;
    let mut den = 0u64;
    for i in 0..preds.len() {
        for j in 0..preds.len() {
            if targets[i] > targets[j] {
                den += 1;
                if preds[i] > preds[j] {
                    num += 1;
                }
            }
        }
    }
    (den > 0).then(|| num as f64 / den as f64)
}

/// OPA computed per group, then averaged over groups where it is defined.
pub fn grouped_opa(preds: &[f64], targets: &[f64], groups: &[u32]) -> Option<f64> {
    let mut by_group: BTreeMap<u32, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for ((&p, &t), &g) in preds.iter().zip(targets).zip(groups) {
        let e = by_group.entry(g).or_default();
        e.0.push(p);
        e.1.push(t);
    }
    let values: Vec<f64> = by_group.values().filter_map(|(p, t)| opa(p, t)).collect();
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn accuracy(logits: &[Vec<f64>], classes: &[usize]) -> f64 {
    if logits.is_empty() {
        return 0.0;
    }
    let correct = logits.iter().zip(classes).filter(|(l, &c)| argmax(l) == c).count();
    correct as f64 / logits.len() as f64
}
