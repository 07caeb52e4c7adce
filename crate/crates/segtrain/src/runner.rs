//! End-to-end training runs with run logs, summaries and resumable
//! checkpoints.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use segtrain_core::engine::{prepare_segments, EpochRecord, OpCounters, Phase, RunData, Trainer};
use segtrain_core::{Dataset, SegmentedGraph, Variant};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cache;
use crate::checkpoint::{self, Checkpoint, CHECKPOINT_FILE};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::io::{self, write_atomic};
use crate::parallel::ThreadedEmbedder;

pub const RUNLOG_FILE: &str = "runlog.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunOptions {
    /// Continue from `checkpoint.json` in the output directory if present.
    pub resume: bool,
    /// Stop once this many epochs (counted from the start of the run) are done.
    pub stop_after: Option<usize>,
    pub threads: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { resume: false, stop_after: None, threads: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_hash: String,
    pub dataset_hash: String,
    pub variant: Variant,
    pub seed: u64,
    pub epochs_completed: usize,
    pub finished: bool,
    pub iteration: u64,
    pub final_loss: Option<f64>,
    pub train_metric: Option<f64>,
    pub val_metric: Option<f64>,
    pub test_metric: Option<f64>,
    /// Test metric of the last main-training epoch.
    pub pre_finetune_test_metric: Option<f64>,
    pub counters: OpCounters,
    pub peak_retained_nodes: usize,
    pub wall_ms: f64,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub summary: Summary,
    /// Every epoch of the run, including those before a resume.
    pub records: Vec<EpochRecord>,
}

impl RunOutcome {
    pub fn last_of(&self, phase: Phase) -> Option<&EpochRecord> {
        self.records.iter().rev().find(|r| r.phase == phase)
    }
}

/// Run log line: the epoch record plus the config hash.
pub fn encode_record(config_hash: &str, record: &EpochRecord) -> String {
    let mut value = serde_json::to_value(record).expect("records serialize");
    if let Value::Object(map) = &mut value {
        map.insert("config_hash".into(), Value::String(config_hash.into()));
    }
    value.to_string()
}

pub fn decode_record(line: &str) -> serde_json::Result<(String, EpochRecord)> {
    let mut value: Value = serde_json::from_str(line)?;
    let hash = match &mut value {
        Value::Object(map) => map.remove("config_hash").and_then(|v| v.as_str().map(String::from)),
        _ => None,
    };
    Ok((hash.unwrap_or_default(), serde_json::from_value(value)?))
}

pub fn read_runlog(path: &Path) -> Result<Vec<EpochRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| decode_record(l).map(|r| r.1).map_err(|e| Error::parse(path, i + 1, e)))
        .collect()
}

/// Train, validation and test segments for a plan, using the segment cache
/// when the config names one.
pub fn segment_splits(
    config: &ExperimentConfig,
    dataset: &Dataset,
    dataset_hash: &str,
    threads: usize,
) -> Result<[Vec<SegmentedGraph>; 3]> {
    let plan = &config.plan;
    let split = &dataset.split;
    let parts = [&split.train, &split.validation, &split.test];
    match (&config.cache_dir, plan.variant) {
        (Some(dir), v) if v != Variant::Full => {
            let (all, _, _) = cache::load_or_partition(
                dir,
                dataset,
                dataset_hash,
                plan.partition_method,
                plan.max_segment_nodes,
                plan.seed,
                threads,
            )?;
            Ok(parts.map(|ids| ids.iter().map(|&i| all[i].clone()).collect()))
        }
        _ => {
            let [a, b, c] = parts.map(|ids| prepare_segments(dataset, ids, plan));
            Ok([a?, b?, c?])
        }
    }
}

fn fmt_metric(m: Option<f64>) -> String {
    m.map_or_else(|| "-".into(), |v| format!("{v:.3}"))
}

fn progress_line(r: &EpochRecord) -> String {
    let phase = match r.phase {
        Phase::Train => "train",
        Phase::Finetune => "finetune",
    };
    format!(
        "epoch {:>3} {phase:<8} loss {:.4} train {} val {} test {} grad {} nograd {} warmup {} lookups {} skipped {} peak {}",
        r.epoch,
        r.loss,
        fmt_metric(r.train_metric),
        fmt_metric(r.val_metric),
        fmt_metric(r.test_metric),
        r.counters.grad_nodes,
        r.counters.nograd_nodes,
        r.counters.warmup_nodes,
        r.counters.lookups,
        r.counters.skipped_lookups,
        r.peak_retained_nodes,
    )
}

fn summarize(
    config_hash: &str,
    dataset_hash: &str,
    trainer: &Trainer,
    records: &[EpochRecord],
    wall_ms: f64,
) -> Summary {
    let last = records.last();
    Summary {
        config_hash: config_hash.into(),
        dataset_hash: dataset_hash.into(),
        variant: trainer.plan().variant,
        seed: trainer.plan().seed,
        epochs_completed: trainer.epochs_done(),
        finished: trainer.is_finished(),
        iteration: trainer.iteration(),
        final_loss: last.map(|r| r.loss),
        train_metric: last.and_then(|r| r.train_metric),
        val_metric: last.and_then(|r| r.val_metric),
        test_metric: last.and_then(|r| r.test_metric),
        pre_finetune_test_metric: records.iter().rev().find(|r| r.phase == Phase::Train).and_then(|r| r.test_metric),
        counters: trainer.counters(),
        peak_retained_nodes: records.iter().map(|r| r.peak_retained_nodes).max().unwrap_or(0),
        wall_ms,
    }
}

/// Runs the experiment. Progress lines go to `out`; artifacts go to the
/// config's output directory when it has one.
pub fn run(config: &ExperimentConfig, opts: &RunOptions, out: &mut dyn Write) -> Result<RunOutcome> {
    config.validate()?;
    let started = Instant::now();
    let config_hash = config.hash();
    let dataset = config.load_dataset()?;
    let dataset_hash = io::dataset_hash(&dataset)?;
    let [train, val, test] = segment_splits(config, &dataset, &dataset_hash, opts.threads)?;
    if train.is_empty() {
        return Err(Error::Config("the training split is empty".into()));
    }
    let dir = config.output_dir.as_deref();
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let ckpt_path = dir.map(|d| d.join(CHECKPOINT_FILE));
    let mut trainer = match ckpt_path.as_deref().filter(|p| opts.resume && p.is_file()) {
        Some(path) => {
            let ckpt = checkpoint::load(path)?;
            if ckpt.config_hash != config_hash || ckpt.dataset_hash != dataset_hash {
                return Err(Error::Config(format!("{} was written by a different config or dataset", path.display())));
            }
            let t = Trainer::from_state(ckpt.state)?;
            writeln!(out, "resuming after epoch {}", t.epochs_done()).ok();
            t
        }
        None => Trainer::new(config.plan.clone(), config.model_config(&dataset))?,
    };
    trainer.set_embedder(Box::new(ThreadedEmbedder::new(opts.threads)));

    // Keep only log lines the checkpoint already covers.
    let log_path = dir.map(|d| d.join(RUNLOG_FILE));
    let mut records: Vec<EpochRecord> = match log_path.as_deref().filter(|p| trainer.epochs_done() > 0 && p.is_file()) {
        Some(p) => read_runlog(p)?.into_iter().filter(|r| r.epoch <= trainer.epochs_done()).collect(),
        None => Vec::new(),
    };
    let mut log_text: String = records.iter().map(|r| encode_record(&config_hash, r) + "\n").collect();

    let data = RunData { train: &train, val: &val, test: &test };
    let save = |trainer: &Trainer| -> Result<()> {
        match &ckpt_path {
            Some(p) => checkpoint::save(
                p,
                &Checkpoint { config_hash: config_hash.clone(), dataset_hash: dataset_hash.clone(), state: trainer.state() },
            ),
            None => Ok(()),
        }
    };
    if let Some(p) = &log_path {
        write_atomic(p, log_text.as_bytes())?;
    }

    while !trainer.is_finished() && opts.stop_after.is_none_or(|n| trainer.epochs_done() < n) {
        if trainer.next_phase() == Some(Phase::Finetune) && trainer.epochs_done() == trainer.plan().epochs {
            writeln!(out, "finetuning head at epoch {}", trainer.epochs_done()).ok();
        }
        let t0 = Instant::now();
        let mut record = trainer.run_epoch(&data)?;
        if config.trace_sample > 0 && trainer.plan().variant.uses_table() && !trainer.table().is_empty() {
            record.trace = Some(trainer.staleness_trace(&train, config.trace_sample)?);
        }
        record.wall_ms = Some(t0.elapsed().as_secs_f64() * 1e3);
        writeln!(out, "{}", progress_line(&record)).ok();
        if let Some(p) = &log_path {
            log_text.push_str(&encode_record(&config_hash, &record));
            log_text.push('\n');
            write_atomic(p, log_text.as_bytes())?;
        }
        records.push(record);
        if trainer.epochs_done() % config.checkpoint_every == 0 {
            save(&trainer)?;
        }
    }
    save(&trainer)?;

    let summary = summarize(&config_hash, &dataset_hash, &trainer, &records, started.elapsed().as_secs_f64() * 1e3);
    if let Some(dir) = dir {
        let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
        text.push('\n');
        write_atomic(&dir.join(SUMMARY_FILE), text.as_bytes())?;
    }
    if !trainer.is_finished() {
        writeln!(out, "stopped after epoch {}", trainer.epochs_done()).ok();
    }
    Ok(RunOutcome { summary, records })
}
