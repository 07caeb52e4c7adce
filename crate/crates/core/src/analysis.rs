//! Staleness bias of the pooled graph embedding.
//!
//! With `S` of `J` segments fresh and the rest taken from the table, the
//! pooled embedding is `h̄ + δ`, where `h̄ = (1/J)·Σ hⱼ` and
//! `δ = (1/J)·Σ δⱼ`. Under a loss `L`, `E[L(h̄ + δ)] − L(h̄) ≈ B + R` with a
//! first-order term `B = ∇L(h̄)ᵀ·E[δ]` and a second-order term
//! `R = ½·⟨∇²L, E[δδᵀ]⟩`. Both are exact for a quadratic loss.
//!
//! Moments are enumerated over every selection and keep mask in exact
//! rational arithmetic. Every finite `f64` is a dyadic rational, so the
//! enumerated sums and the closed forms can be compared for equality.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{aggregate, sample_segments, sed_weights, Pooling, TrainPlan, Trainer, Variant};
use crate::error::{Error, Result};
use crate::graph::{Graph, Label};
use crate::model::ModelConfig;
use crate::partition::{partition, PartitionMethod};
use crate::rng;
use crate::tensor::Matrix;

pub type Q = BigRational;

/// Largest number of (selection, mask) outcomes enumerated.
pub const ENUMERATION_LIMIT: u128 = 1 << 22;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Every stale embedding used with unit weight.
    Et,
    /// Stale embedding dropout.
    Sed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationModel {
    pub j: usize,
    pub s: usize,
    pub p: f64,
    pub fresh: Vec<Vec<f64>>,
    pub stale: Vec<Vec<f64>>,
}

impl PerturbationModel {
    pub fn new(s: usize, p: f64, fresh: Vec<Vec<f64>>, stale: Vec<Vec<f64>>) -> Result<Self> {
        let j = fresh.len();
        if s == 0 || s > j {
            return Err(Error::InvalidArgument(format!("need 1 ≤ S ≤ J, got S={s}, J={j}")));
        }
        if stale.len() != j {
            return Err(Error::InvalidArgument("one stale embedding per segment".into()));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("keep probability {p} outside [0, 1]")));
        }
        let d = fresh[0].len();
        for v in fresh.iter().chain(&stale) {
            if v.len() != d {
                return Err(Error::WidthMismatch { expected: d, found: v.len() });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument("embeddings must be finite".into()));
            }
        }
        Ok(Self { j, s, p, fresh, stale })
    }

    /// Random fresh and stale embeddings with entries on a 1/64 grid.
    pub fn random(j: usize, s: usize, p: f64, width: usize, seed: u64) -> Result<Self> {
        let mut r = rng::stream(seed, rng::streams::TRACE);
        let mut v = || -> Vec<f64> { (0..width).map(|_| f64::from(r.gen_range(-128i32..=128)) / 64.0).collect() };
        let fresh: Vec<Vec<f64>> = (0..j).map(|_| v()).collect();
        let stale: Vec<Vec<f64>> = (0..j).map(|_| v()).collect();
        Self::new(s, p, fresh, stale)
    }

    pub fn width(&self) -> usize {
        self.fresh[0].len()
    }

    pub fn with_p(&self, p: f64) -> Result<Self> {
        Self::new(self.s, p, self.fresh.clone(), self.stale.clone())
    }

    /// `(1/J)·Σ hⱼ`
    pub fn clean(&self) -> Vec<f64> {
        let refs: Vec<&[f64]> = self.fresh.iter().map(Vec::as_slice).collect();
        aggregate(&refs, &vec![1.0; self.j], Pooling::Mean).expect("validated widths")
    }

    /// Number of (selection, mask) outcomes the enumeration visits.
    pub fn outcome_count(&self, scheme: Scheme) -> u128 {
        let masks = match scheme {
            Scheme::Et => 1u128,
            Scheme::Sed => 1u128.checked_shl((self.j - self.s) as u32).unwrap_or(u128::MAX),
        };
        binomial(self.j, self.s).saturating_mul(masks)
    }
}

/// Quadratic loss `L(h) = ½·(h − c)ᵀ·A·(h − c)` on the pooled embedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticHead {
    pub a: Matrix,
    pub center: Vec<f64>,
}

impl QuadraticHead {
    pub fn new(a: Matrix, center: Vec<f64>) -> Result<Self> {
        let d = center.len();
        if a.shape() != (d, d) {
            return Err(Error::WidthMismatch { expected: d, found: a.rows() });
        }
        Ok(Self { a, center })
    }

    /// `A = MᵀM + I/4` for a random grid-valued `M`.
    pub fn random(width: usize, seed: u64) -> Self {
        let mut r = rng::stream(seed ^ 0x5151, rng::streams::TRACE);
        let m: Vec<f64> = (0..width * width).map(|_| f64::from(r.gen_range(-16i32..=16)) / 16.0).collect();
        let mut a = Matrix::zeros(width, width);
        for i in 0..width {
            for k in 0..width {
                let mut s = if i == k { 0.25 } else { 0.0 };
                for l in 0..width {
                    s += m[l * width + i] * m[l * width + k];
                }
                a.set(i, k, s);
            }
        }
        let center = (0..width).map(|_| f64::from(r.gen_range(-64i32..=64)) / 32.0).collect();
        Self { a, center }
    }

    pub fn loss(&self, h: &[f64]) -> f64 {
        let d: Vec<f64> = h.iter().zip(&self.center).map(|(x, c)| x - c).collect();
        let mut s = 0.0;
        for i in 0..d.len() {
            for k in 0..d.len() {
                s += d[i] * self.a.get(i, k) * d[k];
            }
        }
        0.5 * s
    }

    /// `A·(h − c)`
    pub fn gradient(&self, h: &[f64]) -> Vec<f64> {
        let d: Vec<f64> = h.iter().zip(&self.center).map(|(x, c)| x - c).collect();
        (0..d.len()).map(|i| (0..d.len()).map(|k| self.a.get(i, k) * d[k]).sum()).collect()
    }
}

/// Exact expectations over segment selection and keep masks.
#[derive(Clone, Debug, PartialEq)]
pub struct DeltaMoments {
    pub outcomes: u128,
    /// `E[δⱼ]` per segment.
    pub mean: Vec<Vec<Q>>,
    /// `E[δⱼ ⊙ δⱼ]` per segment.
    pub second: Vec<Vec<Q>>,
    /// `E[δ]` of the pooled perturbation.
    pub pooled_mean: Vec<Q>,
    /// `E[δ·δᵀ]` of the pooled perturbation.
    pub pooled_outer: Vec<Vec<Q>>,
}

pub fn q(x: f64) -> Q {
    BigRational::from_float(x).expect("finite value")
}

fn qi(n: usize) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn to_f64(x: &Q) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

pub fn to_f64_vecs(v: &[Vec<Q>]) -> Vec<Vec<f64>> {
    v.iter().map(|r| r.iter().map(to_f64).collect()).collect()
}

fn binomial(n: usize, k: usize) -> u128 {
    let mut r = 1u128;
    for i in 0..k.min(n - k) {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r
}

/// Enumerates every equally likely selection and, for SED, every keep mask.
pub fn exact_delta_moments(model: &PerturbationModel, scheme: Scheme) -> Result<DeltaMoments> {
    let outcomes = model.outcome_count(scheme);
    if outcomes > ENUMERATION_LIMIT || model.j > 31 {
        return Err(Error::EnumerationBudget { outcomes, limit: ENUMERATION_LIMIT });
    }
    let (j, s, d) = (model.j, model.s, model.width());
    let p = q(model.p);
    let one_minus_p = Q::one() - &p;
    let h: Vec<Vec<Q>> = model.fresh.iter().map(|v| v.iter().map(|&x| q(x)).collect()).collect();
    let ht: Vec<Vec<Q>> = model.stale.iter().map(|v| v.iter().map(|&x| q(x)).collect()).collect();
    // Selected weight p + (1 − p)·J/S, exactly.
    let eta = match scheme {
        Scheme::Et => Q::one(),
        Scheme::Sed => &p + &one_minus_p * qi(j) / qi(s),
    };
    let selection_prob = Q::one() / Q::from_integer(BigInt::from(binomial(j, s)));

    let mut mean = vec![vec![Q::zero(); d]; j];
    let mut second = vec![vec![Q::zero(); d]; j];
    let mut pooled_mean = vec![Q::zero(); d];
    let mut pooled_outer = vec![vec![Q::zero(); d]; d];
    let jq = qi(j);

    for sel in (0u32..1 << j).filter(|m| m.count_ones() as usize == s) {
        let rest: Vec<usize> = (0..j).filter(|&k| sel & (1 << k) == 0).collect();
        let masks: u32 = match scheme {
            Scheme::Et => 1,
            Scheme::Sed => 1 << rest.len(),
        };
        for mask in 0..masks {
            let mut prob = selection_prob.clone();
            let mut deltas: Vec<Vec<Q>> = Vec::with_capacity(j);
            for k in 0..j {
                let delta: Vec<Q> = if sel & (1 << k) != 0 {
                    h[k].iter().map(|x| (&eta - Q::one()) * x).collect()
                } else {
                    let kept = match scheme {
                        Scheme::Et => true,
                        Scheme::Sed => {
                            let bit = rest.iter().position(|&r| r == k).expect("non-selected index");
                            let kept = mask & (1 << bit) != 0;
                            prob *= if kept { p.clone() } else { one_minus_p.clone() };
                            kept
                        }
                    };
                    if kept {
                        ht[k].iter().zip(&h[k]).map(|(a, b)| a - b).collect()
                    } else {
                        h[k].iter().map(|x| -x).collect()
                    }
                };
                deltas.push(delta);
            }
            if prob.is_zero() {
                continue;
            }
            let mut pooled = vec![Q::zero(); d];
            for (k, delta) in deltas.iter().enumerate() {
                for c in 0..d {
                    mean[k][c] += &prob * &delta[c];
                    second[k][c] += &prob * &delta[c] * &delta[c];
                    pooled[c] += &delta[c];
                }
            }
            for x in &mut pooled {
                *x /= &jq;
            }
            for a in 0..d {
                pooled_mean[a] += &prob * &pooled[a];
                for b in 0..d {
                    pooled_outer[a][b] += &prob * &pooled[a] * &pooled[b];
                }
            }
        }
    }
    Ok(DeltaMoments { outcomes, mean, second, pooled_mean, pooled_outer })
}

/// Closed form `E[δⱼ^ET] = ((J − S)/J)·(h̃ⱼ − hⱼ)`.
pub fn et_mean_formula(model: &PerturbationModel) -> Vec<Vec<Q>> {
    let f = (qi(model.j) - qi(model.s)) / qi(model.j);
    model
        .fresh
        .iter()
        .zip(&model.stale)
        .map(|(h, ht)| h.iter().zip(ht).map(|(&a, &b)| &f * (q(b) - q(a))).collect())
        .collect()
}

/// Closed form `E[δⱼ^SED] = p·E[δⱼ^ET]`.
pub fn sed_mean_formula(model: &PerturbationModel) -> Vec<Vec<Q>> {
    let p = q(model.p);
    et_mean_formula(model).into_iter().map(|r| r.into_iter().map(|x| &p * x).collect()).collect()
}

/// Closed form of `E[δⱼ ⊙ δⱼ]` under SED:
/// `p(J−S)/J·(h̃−h)² + (1−p)(J−S)(J − pJ + pS)/(JS)·h²`.
pub fn sed_second_formula(model: &PerturbationModel) -> Vec<Vec<Q>> {
    let (j, s, p) = (qi(model.j), qi(model.s), q(model.p));
    let stale_w = &p * (&j - &s) / &j;
    let fresh_w = (Q::one() - &p) * (&j - &s) * (&j - &p * &j + &p * &s) / (&j * &s);
    model
        .fresh
        .iter()
        .zip(&model.stale)
        .map(|(h, ht)| {
            h.iter()
                .zip(ht)
                .map(|(&a, &b)| {
                    let diff = q(b) - q(a);
                    let a = q(a);
                    &stale_w * &diff * &diff + &fresh_w * &a * &a
                })
                .collect()
        })
        .collect()
}

/// Closed form of `E[δⱼ ⊙ δⱼ]` under ET: `(J−S)/J·(h̃−h)²`.
pub fn et_second_formula(model: &PerturbationModel) -> Vec<Vec<Q>> {
    let f = (qi(model.j) - qi(model.s)) / qi(model.j);
    model
        .fresh
        .iter()
        .zip(&model.stale)
        .map(|(h, ht)| {
            h.iter()
                .zip(ht)
                .map(|(&a, &b)| {
                    let diff = q(b) - q(a);
                    &f * &diff * &diff
                })
                .collect()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasTerms {
    /// `B = ∇L(h̄)ᵀ·E[δ]`
    pub first_order: f64,
    /// `R = ½·⟨A, E[δδᵀ]⟩`
    pub second_order: f64,
}

impl BiasTerms {
    pub fn total(&self) -> f64 {
        self.first_order + self.second_order
    }
}

/// Exact `B` and `R` for a quadratic head, from enumerated moments.
pub fn exact_bias(model: &PerturbationModel, head: &QuadraticHead, scheme: Scheme) -> Result<BiasTerms> {
    let m = exact_delta_moments(model, scheme)?;
    let d = model.width();
    let g = head.gradient(&model.clean());
    let mut b = Q::zero();
    for c in 0..d {
        b += q(g[c]) * &m.pooled_mean[c];
    }
    let mut r = Q::zero();
    for a in 0..d {
        for c in 0..d {
            r += q(head.a.get(a, c)) * &m.pooled_outer[a][c];
        }
    }
    r /= qi(2);
    Ok(BiasTerms { first_order: to_f64(&b), second_order: to_f64(&r) })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub trials: usize,
    /// Mean of `L(h̄ + δ) − L(h̄)`.
    pub mean: f64,
    pub stderr: f64,
    /// Mean of `∇L(h̄)ᵀ·δ`.
    pub first_order_mean: f64,
    pub first_order_stderr: f64,
}

/// Monte-Carlo estimate of the loss shift, drawing selections and keep masks
/// with the same routines the trainer uses.
pub fn monte_carlo_bias(
    model: &PerturbationModel,
    head: &QuadraticHead,
    scheme: Scheme,
    trials: usize,
    seed: u64,
) -> Result<Estimate> {
    if trials < 1000 {
        return Err(Error::InvalidArgument(format!("need at least 1000 trials, got {trials}")));
    }
    let mut select = rng::stream(seed, rng::streams::SELECT);
    let mut dropout = rng::stream(seed, rng::streams::DROPOUT);
    let clean = model.clean();
    let base = head.loss(&clean);
    let g = head.gradient(&clean);
    let keep = match scheme {
        Scheme::Et => 1.0,
        Scheme::Sed => model.p,
    };
    let (mut sum, mut sum_sq, mut f_sum, mut f_sq) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..trials {
        let selected = sample_segments(model.j, model.s, &mut select);
        let a = sed_weights(model.j, &selected, keep, &mut dropout)?;
        let rows: Vec<&[f64]> = (0..model.j)
            .map(|k| if a.selected[k] { model.fresh[k].as_slice() } else { model.stale[k].as_slice() })
            .collect();
        let pooled = aggregate(&rows, &a.weights, Pooling::Mean)?;
        let shift = head.loss(&pooled) - base;
        let first: f64 = pooled.iter().zip(&clean).zip(&g).map(|((x, c), gi)| gi * (x - c)).sum();
        sum += shift;
        sum_sq += shift * shift;
        f_sum += first;
        f_sq += first * first;
    }
    let n = trials as f64;
    let se = |s: f64, s2: f64| libm::sqrt(((s2 - s * s / n) / (n - 1.0)).max(0.0) / n);
    Ok(Estimate {
        trials,
        mean: sum / n,
        stderr: se(sum, sum_sq),
        first_order_mean: f_sum / n,
        first_order_stderr: se(f_sum, f_sq),
    })
}

/// `|estimate − exact| ≤ k·stderr`; a zero standard error demands agreement
/// to rounding.
pub fn within_stderr(estimate: f64, exact: f64, stderr: f64, k: f64) -> bool {
    let tol = (k * stderr).max(1e-12 * (1.0 + exact.abs()));
    (estimate - exact).abs() <= tol
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Runs every moment and bias relation on a random model: closed forms
/// against enumeration for ET and SED, the p = 1 reduction to ET, and
/// Monte Carlo against exact `B + R` and against `p·B_ET`.
pub fn bias_relations(j: usize, s: usize, width: usize, trials: usize, seed: u64) -> Result<Vec<Relation>> {
    let mut out = Vec::new();
    let base = PerturbationModel::random(j, s, 0.5, width, seed)?;
    let head = QuadraticHead::random(width, seed);
    let et = exact_delta_moments(&base, Scheme::Et)?;
    out.push(Relation {
        name: "et-first-moment".into(),
        passed: et.mean == et_mean_formula(&base),
        detail: format!("J={j} S={s}, {} outcomes", et.outcomes),
    });
    out.push(Relation {
        name: "et-second-moment".into(),
        passed: et.second == et_second_formula(&base),
        detail: String::new(),
    });
    let et_bias = exact_bias(&base, &head, Scheme::Et)?;
    let et_mc = monte_carlo_bias(&base, &head, Scheme::Et, trials, seed ^ 0xe7)?;
    out.push(Relation {
        name: "et-monte-carlo".into(),
        passed: within_stderr(et_mc.mean, et_bias.total(), et_mc.stderr, 3.0),
        detail: format!("exact {:.6} mc {:.6} ± {:.6}", et_bias.total(), et_mc.mean, et_mc.stderr),
    });
    for p in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let m = base.with_p(p)?;
        let sed = exact_delta_moments(&m, Scheme::Sed)?;
        out.push(Relation {
            name: format!("sed-first-moment p={p}"),
            passed: sed.mean == sed_mean_formula(&m),
            detail: format!("{} outcomes", sed.outcomes),
        });
        out.push(Relation {
            name: format!("sed-second-moment p={p}"),
            passed: sed.second == sed_second_formula(&m),
            detail: String::new(),
        });
        if p == 1.0 {
            out.push(Relation {
                name: "sed-equals-et at p=1".into(),
                passed: sed == DeltaMoments { outcomes: sed.outcomes, ..et.clone() },
                detail: String::new(),
            });
        }
        let exact = exact_bias(&m, &head, Scheme::Sed)?;
        let mc = monte_carlo_bias(&m, &head, Scheme::Sed, trials, seed ^ (p.to_bits() >> 40))?;
        out.push(Relation {
            name: format!("sed-monte-carlo p={p}"),
            passed: within_stderr(mc.mean, exact.total(), mc.stderr, 3.0),
            detail: format!("exact {:.6} mc {:.6} ± {:.6}", exact.total(), mc.mean, mc.stderr),
        });
        out.push(Relation {
            name: format!("first-order ratio p={p}"),
            passed: within_stderr(mc.first_order_mean, p * et_bias.first_order, mc.first_order_stderr, 3.0),
            detail: format!(
                "B_sed {:.6} ± {:.6}, p·B_et {:.6}",
                mc.first_order_mean,
                mc.first_order_stderr,
                p * et_bias.first_order
            ),
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StalenessReport {
    pub n_graphs: usize,
    pub segments: Vec<usize>,
    pub s: usize,
    pub epochs: usize,
    /// Smallest staleness read in each epoch; `None` when nothing was read.
    pub epoch_min: Vec<Option<u64>>,
    pub epoch_max: Vec<Option<u64>>,
    /// Long-run mean staleness at lookup, per graph (averaged over its keys).
    pub graph_mean: Vec<f64>,
    /// `n·J/S` per graph.
    pub graph_expected: Vec<f64>,
    /// Times each `(graph, segment)` received a gradient forward.
    pub updates: BTreeMap<(usize, usize), u64>,
    pub visits: Vec<u64>,
}

impl StalenessReport {
    /// Smallest staleness read after the first epoch.
    pub fn min_after_first_epoch(&self) -> Option<u64> {
        self.epoch_min.iter().skip(1).flatten().min().copied()
    }

    /// Largest ratio of observed long-run staleness to `n·J/S`.
    pub fn worst_ratio(&self) -> f64 {
        self.graph_mean
            .iter()
            .zip(&self.graph_expected)
            .filter(|(_, e)| **e > 0.0)
            .map(|(m, e)| if m > e { m / e } else { e / m })
            .fold(1.0, f64::max)
    }

    /// Pearson chi-square of per-key update counts against `visits·S/J`.
    pub fn update_chi_square(&self) -> (f64, usize) {
        let mut chi = 0.0;
        let mut cells = 0usize;
        for (g, &j) in self.segments.iter().enumerate() {
            let expected = self.visits[g] as f64 * self.s.min(j) as f64 / j as f64;
            if expected == 0.0 || j == 1 {
                continue;
            }
            for k in 0..j {
                let o = *self.updates.get(&(g, k)).unwrap_or(&0) as f64;
                chi += (o - expected) * (o - expected) / expected;
                cells += 1;
            }
        }
        (chi, cells.saturating_sub(self.segments.iter().filter(|&&j| j > 1).count()))
    }
}

/// Drives a real `gst-e` trainer over tiny graphs whose nodes are their own
/// segments, visiting graphs in a fixed order one per step, and records the
/// staleness of every table read.
pub fn simulate_staleness(segments: &[usize], s: usize, epochs: usize, seed: u64) -> Result<StalenessReport> {
    if segments.is_empty() || segments.contains(&0) {
        return Err(Error::InvalidArgument("every graph needs at least one segment".into()));
    }
    let graphs = segments
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            let g = Graph::new(j, &[], Matrix::from_vec(j, 1, vec![1.0; j]), Label::Class { class: 0, num_classes: 2 })?;
            partition(i, &g, PartitionMethod::RandomEdgeCut, 1, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let plan = TrainPlan {
        variant: Variant::GstE,
        segments_per_graph: s,
        batch_size: 1,
        epochs,
        finetune_epochs: 0,
        lr: 1e-3,
        shuffle: false,
        seed,
        ..TrainPlan::default()
    };
    let mut trainer = Trainer::new(plan, ModelConfig::sage(1, 2, 2))?;
    let n = graphs.len();
    let mut epoch_min = Vec::with_capacity(epochs);
    let mut epoch_max = Vec::with_capacity(epochs);
    let mut sums: BTreeMap<(usize, usize), (u64, u64)> = BTreeMap::new();
    let mut updates: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut visits = vec![0u64; n];
    for _ in 0..epochs {
        let (mut lo, mut hi) = (None::<u64>, None::<u64>);
        for (g, sg) in graphs.iter().enumerate() {
            let stats = trainer.train_step(&[sg])?;
            for &(gid, seg, st) in &stats.lookups {
                lo = Some(lo.map_or(st, |x| x.min(st)));
                hi = Some(hi.map_or(st, |x| x.max(st)));
                let e = sums.entry((gid, seg)).or_default();
                e.0 += st;
                e.1 += 1;
            }
            for &key in &stats.grad_segments {
                *updates.entry(key).or_default() += 1;
            }
            visits[g] += 1;
        }
        epoch_min.push(lo);
        epoch_max.push(hi);
    }
    let graph_mean = segments
        .iter()
        .enumerate()
        .map(|(g, &j)| {
            let (tot, cnt) = (0..j).filter_map(|k| sums.get(&(g, k))).fold((0u64, 0u64), |a, b| (a.0 + b.0, a.1 + b.1));
            if cnt == 0 {
                0.0
            } else {
                tot as f64 / cnt as f64
            }
        })
        .collect();
    let graph_expected = segments
        .iter()
        .map(|&j| if j > s { n as f64 * j as f64 / s as f64 } else { 0.0 })
        .collect();
    Ok(StalenessReport {
        n_graphs: n,
        segments: segments.to_vec(),
        s,
        epochs,
        epoch_min,
        epoch_max,
        graph_mean,
        graph_expected,
        updates,
        visits,
    })
}
