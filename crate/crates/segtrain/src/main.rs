use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use segtrain::cache::{self, CacheStatus};
use segtrain::checkpoint;
use segtrain::config::{DatasetSource, ExperimentConfig, Overrides};
use segtrain::experiments::{self, SweepParameter};
use segtrain::io::{self, write_atomic};
use segtrain::parallel::{self, ThreadedEmbedder};
use segtrain::runner::{self, RunOptions};
use segtrain::{Error, Result};
use segtrain_core::engine::{prepare_segments, Trainer};
use segtrain_core::partition::partition_stats;
use segtrain_core::synth::{Family, GeneratorSpec};
use segtrain_core::{Dataset, Label, PartitionMethod, Task};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(name = "segtrain", version, about = "Segment training for whole-graph property prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Generate(GenerateArgs),
    /// Partition a dataset into segments and cache the result.
    Partition(PartitionArgs),
    /// Train a model.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split.
    Eval(EvalArgs),
    /// Analysis harnesses and ablation sweeps.
    Analyze {
        #[command(subcommand)]
        mode: AnalyzeMode,
    },
}

#[derive(Args)]
struct GenerateArgs {
    /// Generator spec (JSON); defaults apply to missing fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, value_parser = parse_family)]
    family: Option<Family>,
    #[arg(long)]
    n_graphs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "data")]
    out: PathBuf,
}

#[derive(Args)]
struct PartitionArgs {
    /// Dataset directory or graph file.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "locality-edge-cut")]
    method: PartitionMethod,
    #[arg(long, default_value_t = 200)]
    cap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Defaults to `cache/` next to the dataset.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory or graph file; replaces the config's dataset.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Output directory; replaces the config's.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    /// Continue from the checkpoint in the output directory.
    #[arg(long)]
    resume: bool,
    /// Stop once this many epochs are done.
    #[arg(long)]
    stop_after: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    /// Pool table entries instead of fresh forwards.
    #[arg(long)]
    from_table: bool,
    /// Recompute the table entries of the evaluated graphs first.
    #[arg(long)]
    refresh: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum AnalyzeMode {
    /// Exact and sampled staleness bias with the relation checks.
    Bias {
        #[arg(long, default_value_t = 4)]
        j: usize,
        #[arg(long, default_value_t = 1)]
        s: usize,
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        #[arg(long, default_value_t = 3)]
        width: usize,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Table staleness of a simulated run.
    Staleness {
        /// Segment count of each graph.
        #[arg(long, value_delimiter = ',', default_value = "4,2,6,3,5,1,8,2")]
        segments: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        s: usize,
        #[arg(long, default_value_t = 60)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Test metric against the SED keep probability.
    AblateP(SweepArgs),
    /// Test metric against the segment size cap.
    AblateCap(SweepArgs),
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    /// Seeds 0..N.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    /// Largest mean difference still called flat (cap sweep).
    #[arg(long, default_value_t = 0.05)]
    flat_tolerance: f64,
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_family(s: &str) -> std::result::Result<Family, String> {
    match s {
        "community-classification" | "classification" => Ok(Family::CommunityClassification),
        "weighted-sum-ranking" | "ranking" => Ok(Family::WeightedSumRanking),
        _ => Err(format!("unknown family `{s}`")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Partition(a) => partition(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Analyze { mode } => analyze(mode),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn short_hash(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..8])
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("reports serialize") + "\n";
    if let Some(p) = out {
        write_atomic(p, text.as_bytes())?;
    }
    print!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct GeneratorRecord<'a> {
    spec_hash: String,
    spec: &'a GeneratorSpec,
}

fn generate(a: GenerateArgs) -> Result<()> {
    let mut spec = match &a.spec {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str::<GeneratorSpec>(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => GeneratorSpec::default(),
    };
    if let Some(f) = a.family {
        spec = GeneratorSpec { family: f, ..spec };
        if a.spec.is_none() && f == Family::WeightedSumRanking {
            spec = GeneratorSpec { seed: spec.seed, n_graphs: spec.n_graphs, ..GeneratorSpec::ranking() };
        }
    }
    if let Some(n) = a.n_graphs {
        spec.n_graphs = n;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    // Generate and encode everything before touching the output directory.
    let ds = spec.generate().map_err(|e| Error::Config(e.to_string()))?;
    let spec_hash = short_hash(&serde_json::to_vec(&spec).expect("spec serializes"));
    let record = serde_json::to_string_pretty(&GeneratorRecord { spec_hash: spec_hash.clone(), spec: &spec })
        .expect("spec serializes")
        + "\n";
    io::save_dataset(&a.out, &ds)?;
    write_atomic(&a.out.join("generator.json"), record.as_bytes())?;

    println!("wrote {} graphs to {} (spec {spec_hash})", ds.len(), a.out.display());
    let nodes: Vec<usize> = ds.graphs.iter().map(|g| g.node_count()).collect();
    println!(
        "nodes per graph: min {} mean {:.1} max {}",
        nodes.iter().min().unwrap_or(&0),
        nodes.iter().sum::<usize>() as f64 / nodes.len().max(1) as f64,
        nodes.iter().max().unwrap_or(&0)
    );
    println!("split: train {} val {} test {}", ds.split.train.len(), ds.split.validation.len(), ds.split.test.len());
    match ds.task {
        Task::Classification { num_classes } => {
            let mut counts = vec![0usize; num_classes];
            for g in &ds.graphs {
                if let Label::Class { class, .. } = g.label {
                    counts[class] += 1;
                }
            }
            println!("classes: {num_classes}");
            for (k, c) in counts.iter().enumerate() {
                println!("  class {k}: {c}");
            }
        }
        Task::RegressionRanking => {
            let groups: std::collections::BTreeSet<_> = ds.graphs.iter().filter_map(|g| g.group).collect();
            println!("ranking: {} groups", groups.len());
        }
    }
    Ok(())
}

fn partition(a: PartitionArgs) -> Result<()> {
    let ds = io::load_dataset(&a.dataset)?;
    let hash = io::dataset_hash(&ds)?;
    let threads = parallel::thread_count();
    let cache_dir = a.cache_dir.clone().unwrap_or_else(|| {
        let base = if a.dataset.is_dir() { a.dataset.clone() } else { a.dataset.parent().unwrap_or(Path::new("")).into() };
        base.join("cache")
    });
    let (graphs, status, path) = cache::load_or_partition(&cache_dir, &ds, &hash, a.method, a.cap, a.seed, threads)?;
    match status {
        CacheStatus::Hit => println!("cache hit: {} (partitioning skipped)", path.display()),
        CacheStatus::Miss => println!("wrote {}", path.display()),
    }

    let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
    for sg in &graphs {
        *hist.entry(sg.num_segments()).or_default() += 1;
    }
    println!("segments per graph ({}, cap {}):", a.method.name(), a.cap);
    for (j, count) in &hist {
        println!("  J={j:<4} {count}");
    }

    println!("{:<24} {:>6} {:>8} {:>6} {:>10} {:>11}", "method", "J min", "J mean", "J max", "edge cut", "replication");
    let mut ratios = BTreeMap::new();
    for method in PartitionMethod::ALL {
        let all = if method == a.method {
            graphs.clone()
        } else {
            match cache::partition_dataset(&ds, method, a.cap, a.seed, threads) {
                Ok(g) => g,
                Err(e) => {
                    println!("{:<24} {e}", method.name());
                    continue;
                }
            }
        };
        let stats: Vec<_> = all.iter().map(partition_stats).collect();
        let n = stats.len().max(1) as f64;
        let js = stats.iter().map(|s| s.num_segments);
        let cut = stats.iter().map(|s| s.edge_cut_ratio).sum::<f64>() / n;
        let rep = stats.iter().map(|s| s.replication_factor).sum::<f64>() / n;
        ratios.insert(method.name(), cut);
        println!(
            "{:<24} {:>6} {:>8.2} {:>6} {:>10.4} {:>11.3}",
            method.name(),
            js.clone().min().unwrap_or(0),
            js.clone().sum::<usize>() as f64 / n,
            js.max().unwrap_or(0),
            cut,
            rep
        );
    }
    if let (Some(l), Some(r)) = (ratios.get("locality-edge-cut"), ratios.get("random-edge-cut")) {
        println!("edge-cut ratio: locality {l:.4} vs random {r:.4}");
    }
    Ok(())
}

fn dataset_source(path: &Path) -> DatasetSource {
    let (graphs, split) = io::dataset_paths(path);
    DatasetSource::Files { graphs, split }
}

fn build_config(config: Option<&Path>, dataset: Option<&Path>, overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut c = match (config, dataset) {
        (Some(p), _) => ExperimentConfig::load(p)?,
        (None, Some(d)) => ExperimentConfig::new(dataset_source(d)),
        (None, None) => return Err(Error::Config("pass --config or --dataset".into())),
    };
    if let (Some(_), Some(d)) = (config, dataset) {
        c.dataset = dataset_source(d);
    }
    overrides.apply(&mut c);
    Ok(c)
}

fn train(a: TrainArgs) -> Result<()> {
    let mut config = build_config(a.config.as_deref(), a.dataset.as_deref(), &a.overrides)?;
    if let Some(out) = a.out {
        config.output_dir = Some(out);
    }
    if config.output_dir.is_none() {
        config.output_dir = Some(PathBuf::from(format!("runs/{}-seed{}", config.plan.variant.name(), config.plan.seed)));
    }
    let dir = config.output_dir.clone().expect("set above");
    let plan = &config.plan;
    println!(
        "config {}: {} S={} p={} cap={} epochs {}+{} seed {} -> {}",
        config.hash(),
        plan.variant.name(),
        plan.segments_per_graph,
        plan.keep_prob,
        plan.max_segment_nodes,
        plan.epochs,
        plan.finetune_epochs,
        plan.seed,
        dir.display()
    );
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_atomic(&dir.join("config.json"), (config.to_json() + "\n").as_bytes())?;
    let opts = RunOptions { resume: a.resume, stop_after: a.stop_after, threads: parallel::thread_count() };
    let stdout = std::io::stdout();
    let outcome = runner::run(&config, &opts, &mut stdout.lock())?;
    let s = &outcome.summary;
    let m = |v: Option<f64>| v.map_or_else(|| "-".into(), |x| format!("{x:.4}"));
    println!(
        "done: {} epochs, test {} (before finetuning {}), peak retained {} nodes, {:.1} s",
        s.epochs_completed,
        m(s.test_metric),
        m(s.pre_finetune_test_metric),
        s.peak_retained_nodes,
        s.wall_ms / 1e3
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    config_hash: String,
    dataset_hash: String,
    split: String,
    source: &'static str,
    graphs: usize,
    metric: Option<f64>,
    loss: f64,
}

fn eval(a: EvalArgs) -> Result<()> {
    let ckpt = checkpoint::load(&a.checkpoint)?;
    let ds: Dataset = io::load_dataset(&a.dataset)?;
    let ids = match a.split.as_str() {
        "train" => &ds.split.train,
        "val" => &ds.split.validation,
        "test" => &ds.split.test,
        other => return Err(Error::Config(format!("unknown split `{other}`"))),
    };
    let mut trainer = Trainer::from_state(ckpt.state)?;
    trainer.set_embedder(Box::new(ThreadedEmbedder::new(parallel::thread_count())));
    let graphs = prepare_segments(&ds, ids, trainer.plan())?;
    if a.refresh {
        trainer.refresh_table(&graphs)?;
    }
    let result = if a.from_table { trainer.evaluate_from_table(&graphs)? } else { trainer.evaluate(&graphs)? };
    let report = EvalReport {
        config_hash: ckpt.config_hash,
        dataset_hash: io::dataset_hash(&ds)?,
        split: a.split,
        source: if a.from_table { "table" } else { "fresh" },
        graphs: graphs.len(),
        metric: result.metric,
        loss: result.loss,
    };
    emit_json(&report, a.out.as_deref())
}

fn analyze(mode: AnalyzeMode) -> Result<()> {
    match mode {
        AnalyzeMode::Bias { j, s, p, width, trials, seed, out } => {
            let report = experiments::bias_report(j, s, p, width, trials, seed)?;
            for r in &report.relations {
                eprintln!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            emit_json(&report, out.as_deref())
        }
        AnalyzeMode::Staleness { segments, s, epochs, seed, out } => {
            let report = experiments::staleness_report(&segments, s, epochs, seed)?;
            let pf = |ok: bool| if ok { "PASS" } else { "FAIL" };
            eprintln!("{} min staleness after epoch 1: {:?} (n = {})", pf(report.min_staleness_ok), report.min_after_first_epoch, report.n_graphs);
            eprintln!("{} worst mean/expected ratio {:.3}", pf(report.mean_staleness_ok), report.worst_ratio);
            eprintln!("{} update counts chi-square {:.1} on {} dof", pf(report.update_rate_ok), report.chi_square, report.degrees_of_freedom);
            emit_json(&report, out.as_deref())
        }
        AnalyzeMode::AblateP(a) => sweep(a, SweepParameter::KeepProb, &[0.0, 0.25, 0.5, 0.75, 1.0]),
        AnalyzeMode::AblateCap(a) => sweep(a, SweepParameter::SegmentCap, &[50.0, 100.0, 200.0, 400.0]),
    }
}

#[derive(Serialize)]
struct SweepReport {
    #[serde(flatten)]
    sweep: experiments::Sweep,
    best_value: Option<f64>,
    interior_maximum: Option<bool>,
    spread: f64,
    flat: Option<bool>,
}

fn sweep(a: SweepArgs, parameter: SweepParameter, default_values: &[f64]) -> Result<()> {
    let config = build_config(a.config.as_deref(), a.dataset.as_deref(), &a.overrides)?;
    let values = a.values.clone().unwrap_or_else(|| default_values.to_vec());
    let seeds: Vec<u64> = (0..a.seeds).collect();
    let sweep = experiments::sweep(&config, parameter, &values, &seeds, parallel::thread_count())?;
    let mut err = std::io::stderr().lock();
    for p in &sweep.points {
        writeln!(err, "{:>8} mean {:.4} ± {:.4}  {:?}", p.value, p.mean, p.stderr, p.per_seed).ok();
    }
    let spread = sweep.spread();
    let (interior, flat) = match parameter {
        SweepParameter::KeepProb => {
            let i = sweep.interior_maximum();
            writeln!(err, "interior maximum at p=0.5: {}", i.map_or("n/a", |b| if b { "yes" } else { "no" })).ok();
            (i, None)
        }
        SweepParameter::SegmentCap => {
            let f = spread <= a.flat_tolerance;
            writeln!(err, "spread {spread:.4}: {}", if f { "flat" } else { "not flat" }).ok();
            (None, Some(f))
        }
    };
    let report = SweepReport { best_value: sweep.best().map(|p| p.value), interior_maximum: interior, spread, flat, sweep };
    emit_json(&report, a.out.as_deref())
}
