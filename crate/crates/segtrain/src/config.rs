use std::fs;
use std::path::{Path, PathBuf};

use segtrain_core::synth::GeneratorSpec;
use segtrain_core::{Dataset, LossKind, ModelConfig, PartitionMethod, Task, TrainPlan, Variant};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSource {
    Files {
        graphs: PathBuf,
        #[serde(default)]
        split: Option<PathBuf>,
    },
    Generator(GeneratorSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub hidden_dim: usize,
    pub message_passing_layers: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { hidden_dim: 16, message_passing_layers: 2 }
    }
}

/// One experiment: where the data comes from, how to train, and where the
/// artifacts go. The partition seed is the plan seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    #[serde(default)]
    pub plan: TrainPlan,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Segment cache directory; partitions are recomputed when unset.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    /// Write a checkpoint every this many epochs (and always at the end).
    #[serde(default = "one")]
    pub checkpoint_every: usize,
    /// Table entries sampled per epoch for the staleness trace; 0 disables it.
    #[serde(default)]
    pub trace_sample: usize,
}

fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn new(dataset: DatasetSource) -> Self {
        Self {
            dataset,
            plan: TrainPlan::default(),
            model: ModelSpec::default(),
            output_dir: None,
            cache_dir: None,
            checkpoint_every: 1,
            trace_sample: 0,
        }
    }

    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut config: Self =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let DatasetSource::Files { graphs, split } = &mut config.dataset {
            rebase(graphs);
            split.iter_mut().for_each(rebase);
        }
        config.output_dir.iter_mut().for_each(rebase);
        config.cache_dir.iter_mut().for_each(rebase);
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Short hex digest of the serialized config, carried by every artifact.
    /// Output and cache locations do not affect results and are left out.
    pub fn hash(&self) -> String {
        let key = Self { output_dir: None, cache_dir: None, ..self.clone() };
        let bytes = serde_json::to_vec(&key).expect("config serializes");
        hex::encode(&Sha256::digest(&bytes)[..8])
    }

    pub fn validate(&self) -> Result<()> {
        self.plan.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.model.hidden_dim == 0 {
            return Err(Error::Config("model.hidden_dim must be positive".into()));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::Config("checkpoint_every must be positive".into()));
        }
        if let DatasetSource::Files { graphs, split } = &self.dataset {
            for p in std::iter::once(graphs).chain(split) {
                if !p.is_file() {
                    return Err(Error::Config(format!("dataset file {} not found", p.display())));
                }
            }
        }
        Ok(())
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        let ds = match &self.dataset {
            DatasetSource::Files { graphs, split } => io::load_dataset_files(graphs, split.as_deref())?,
            DatasetSource::Generator(spec) => spec.generate().map_err(|e| Error::Config(e.to_string()))?,
        };
        self.check_task(ds.task)?;
        Ok(ds)
    }

    /// The loss must fit the labels.
    pub fn check_task(&self, task: Task) -> Result<()> {
        match (task, self.plan.loss) {
            (Task::Classification { .. }, LossKind::CrossEntropy) | (Task::RegressionRanking, LossKind::PairwiseHinge) => {
                Ok(())
            }
            (task, loss) => Err(Error::Config(format!("loss {loss:?} does not fit a {task:?} dataset"))),
        }
    }

    pub fn model_config(&self, dataset: &Dataset) -> ModelConfig {
        let output = match dataset.task {
            Task::Classification { num_classes } => num_classes,
            Task::RegressionRanking => 1,
        };
        ModelConfig {
            message_passing_layers: self.model.message_passing_layers,
            ..ModelConfig::sage(dataset.feature_dim(), self.model.hidden_dim, output)
        }
    }

    /// Same experiment under another seed. A generated dataset is redrawn
    /// with that seed too.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.plan.seed = seed;
        if let DatasetSource::Generator(spec) = &mut c.dataset {
            spec.seed = seed;
        }
        c
    }
}

/// Command-line overrides of plan fields.
#[derive(Clone, Debug, Default, PartialEq, clap::Args)]
pub struct Overrides {
    #[arg(long)]
    pub variant: Option<Variant>,
    /// SED keep probability.
    #[arg(long)]
    pub p: Option<f64>,
    /// Gradient segments per graph.
    #[arg(long = "S")]
    pub s: Option<usize>,
    #[arg(long)]
    pub segments_cap: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub finetune_epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub partition_method: Option<PartitionMethod>,
    #[arg(long)]
    pub budget_nodes: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, config: &mut ExperimentConfig) {
        let plan = &mut config.plan;
        if let Some(v) = self.variant {
            plan.variant = v;
        }
        if let Some(p) = self.p {
            plan.keep_prob = p;
        }
        if let Some(s) = self.s {
            plan.segments_per_graph = s;
        }
        if let Some(c) = self.segments_cap {
            plan.max_segment_nodes = c;
        }
        if let Some(e) = self.epochs {
            plan.epochs = e;
        }
        if let Some(e) = self.finetune_epochs {
            plan.finetune_epochs = e;
        }
        if let Some(s) = self.seed {
            plan.seed = s;
        }
        if let Some(m) = self.partition_method {
            plan.partition_method = m;
        }
        if let Some(b) = self.budget_nodes {
            plan.budget_nodes = Some(b);
        }
    }
}
