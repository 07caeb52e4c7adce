//! Multi-seed runs and parameter sweeps.

use segtrain_core::analysis::{
    bias_relations, exact_bias, monte_carlo_bias, simulate_staleness, PerturbationModel, QuadraticHead, Scheme,
};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::parallel;
use crate::runner::{self, RunOptions, RunOutcome};

/// Runs the config once per seed without writing artifacts. Seeds run in
/// parallel; each run is single-threaded.
pub fn run_seeds(config: &ExperimentConfig, seeds: &[u64], threads: usize) -> Result<Vec<RunOutcome>> {
    let configs: Vec<ExperimentConfig> = seeds
        .iter()
        .map(|&s| {
            let mut c = config.with_seed(s);
            c.output_dir = None;
            c
        })
        .collect();
    parallel::map(&configs, threads, |c| runner::run(c, &RunOptions::default(), &mut std::io::sink()))
        .into_iter()
        .collect()
}

fn final_metric(o: &RunOutcome) -> Result<f64> {
    o.summary.test_metric.ok_or_else(|| Error::Config("run produced no test metric".into()))
}

pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParameter {
    KeepProb,
    SegmentCap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub per_seed: Vec<f64>,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub points: Vec<SweepPoint>,
}

impl Sweep {
    fn mean_at(&self, value: f64) -> Option<f64> {
        self.points.iter().find(|p| p.value == value).map(|p| p.mean)
    }

    /// Whether the mean at the middle value beats both ends. `None` when the
    /// sweep lacks 0, 0.5 or 1.
    pub fn interior_maximum(&self) -> Option<bool> {
        let (lo, mid, hi) = (self.mean_at(0.0)?, self.mean_at(0.5)?, self.mean_at(1.0)?);
        Some(mid > lo && mid > hi)
    }

    pub fn best(&self) -> Option<&SweepPoint> {
        self.points.iter().max_by(|a, b| a.mean.total_cmp(&b.mean))
    }

    /// Largest difference between point means.
    pub fn spread(&self) -> f64 {
        let means = self.points.iter().map(|p| p.mean);
        means.clone().fold(f64::NEG_INFINITY, f64::max) - means.fold(f64::INFINITY, f64::min)
    }
}

/// Final test metric across seeds for every value of one plan field.
pub fn sweep(
    config: &ExperimentConfig,
    parameter: SweepParameter,
    values: &[f64],
    seeds: &[u64],
    threads: usize,
) -> Result<Sweep> {
    let mut jobs = Vec::new();
    for &v in values {
        let mut c = config.clone();
        match parameter {
            SweepParameter::KeepProb => c.plan.keep_prob = v,
            SweepParameter::SegmentCap => {
                if v < 1.0 || v.fract() != 0.0 {
                    return Err(Error::Config(format!("segment cap {v} is not a positive integer")));
                }
                c.plan.max_segment_nodes = v as usize;
            }
        }
        c.validate()?;
        for &s in seeds {
            let mut c = c.with_seed(s);
            c.output_dir = None;
            jobs.push(c);
        }
    }
    let outcomes: Vec<Result<RunOutcome>> =
        parallel::map(&jobs, threads, |c| runner::run(c, &RunOptions::default(), &mut std::io::sink()));
    let metrics = outcomes.into_iter().map(|o| o.and_then(|o| final_metric(&o))).collect::<Result<Vec<f64>>>()?;
    let points = values
        .iter()
        .zip(metrics.chunks(seeds.len().max(1)))
        .map(|(&value, per_seed)| {
            let (mean, stderr) = mean_and_stderr(per_seed);
            SweepPoint { value, per_seed: per_seed.to_vec(), mean, stderr }
        })
        .collect();
    Ok(Sweep { parameter, config_hash: config.hash(), seeds: seeds.to_vec(), points })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeBias {
    pub scheme: String,
    pub exact_first_order: f64,
    pub exact_second_order: f64,
    pub exact_total: f64,
    pub monte_carlo_mean: f64,
    pub monte_carlo_stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub j: usize,
    pub s: usize,
    pub p: f64,
    pub width: usize,
    pub trials: usize,
    pub seed: u64,
    pub schemes: Vec<SchemeBias>,
    pub relations: Vec<RelationResult>,
    pub all_passed: bool,
}

/// Exact and sampled bias of both schemes on a random perturbation model,
/// plus the relation checks.
pub fn bias_report(j: usize, s: usize, p: f64, width: usize, trials: usize, seed: u64) -> Result<BiasReport> {
    let model = PerturbationModel::random(j, s, p, width, seed)?;
    let head = QuadraticHead::random(width, seed);
    let mut schemes = Vec::new();
    for (name, scheme) in [("et", Scheme::Et), ("sed", Scheme::Sed)] {
        let exact = exact_bias(&model, &head, scheme)?;
        let mc = monte_carlo_bias(&model, &head, scheme, trials, seed)?;
        schemes.push(SchemeBias {
            scheme: name.into(),
            exact_first_order: exact.first_order,
            exact_second_order: exact.second_order,
            exact_total: exact.total(),
            monte_carlo_mean: mc.mean,
            monte_carlo_stderr: mc.stderr,
        });
    }
    let relations: Vec<RelationResult> = bias_relations(j, s, width, trials, seed)?
        .into_iter()
        .map(|r| RelationResult { name: r.name, passed: r.passed, detail: r.detail })
        .collect();
    let all_passed = relations.iter().all(|r| r.passed);
    Ok(BiasReport { j, s, p, width, trials, seed, schemes, relations, all_passed })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StalenessSummary {
    pub segments: Vec<usize>,
    pub s: usize,
    pub epochs: usize,
    pub seed: u64,
    pub n_graphs: usize,
    pub min_after_first_epoch: Option<u64>,
    pub epoch_max: Vec<Option<u64>>,
    pub graph_mean: Vec<f64>,
    pub graph_expected: Vec<f64>,
    pub worst_ratio: f64,
    pub chi_square: f64,
    pub degrees_of_freedom: usize,
    pub min_staleness_ok: bool,
    pub mean_staleness_ok: bool,
    pub update_rate_ok: bool,
}

/// Table staleness of a simulated `gst-e` run. The checks are: reads after
/// the first epoch lag by at least `n` steps, each graph's mean staleness is
/// within a factor 2 of `n·J/S`, and per-key update counts fit `S/J`.
pub fn staleness_report(segments: &[usize], s: usize, epochs: usize, seed: u64) -> Result<StalenessSummary> {
    let r = simulate_staleness(segments, s, epochs, seed)?;
    let n = segments.len() as u64;
    let min = r.min_after_first_epoch();
    let worst = r.worst_ratio();
    let (chi, df) = r.update_chi_square();
    let dff = df as f64;
    Ok(StalenessSummary {
        segments: segments.to_vec(),
        s,
        epochs,
        seed,
        n_graphs: r.n_graphs,
        min_after_first_epoch: min,
        epoch_max: r.epoch_max.clone(),
        graph_mean: r.graph_mean.clone(),
        graph_expected: r.graph_expected.clone(),
        worst_ratio: worst,
        chi_square: chi,
        degrees_of_freedom: df,
        min_staleness_ok: min.is_none_or(|m| m >= n),
        mean_staleness_ok: worst < 2.0,
        update_rate_ok: chi < dff + 5.0 * (2.0 * dff).sqrt(),
    })
}
