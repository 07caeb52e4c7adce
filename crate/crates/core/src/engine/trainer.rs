use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::log::{EpochRecord, OpCounters, Phase, StalenessTrace, StepStats};
use super::plan::{LossKind, Pooling, TrainPlan, Variant};
use super::sed::{gradient_segment_weight, sample_segments, sed_weights};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{Dataset, Label};
use crate::metrics;
use crate::model::{Backbone, Model, ModelConfig};
use crate::params::{optimizer_step, ParamId, ParamStore};
use crate::partition::{partition, Segment, SegmentedGraph};
use crate::rng::{self, SegRng};
use crate::table::EmbeddingTable;
use crate::tensor::{self, Matrix};

/// Computes grad-disabled embeddings for a list of segments. The default
/// runs them in order; the std crate supplies a threaded one.
pub trait Embedder: Send + Sync {
    fn embed_all(&self, backbone: &Backbone, params: &ParamStore, segments: &[&Segment]) -> Result<Vec<Vec<f64>>>;
}

struct Sequential;

impl Embedder for Sequential {
    fn embed_all(&self, backbone: &Backbone, params: &ParamStore, segments: &[&Segment]) -> Result<Vec<Vec<f64>>> {
        segments.iter().map(|s| backbone.embed(params, s)).collect()
    }
}

/// Segments every requested graph according to `plan`. `full` keeps each
/// graph whole.
pub fn prepare_segments(dataset: &Dataset, ids: &[usize], plan: &TrainPlan) -> Result<Vec<SegmentedGraph>> {
    ids.iter()
        .map(|&id| {
            let graph = dataset
                .graphs
                .get(id)
                .ok_or_else(|| Error::InvalidArgument(alloc::format!("graph id {id} out of range")))?;
            if plan.variant == Variant::Full {
                Ok(SegmentedGraph::whole(id, graph))
            } else {
                partition(id, graph, plan.partition_method, plan.max_segment_nodes, plan.seed)
            }
        })
        .collect()
}

pub struct RunData<'d> {
    pub train: &'d [SegmentedGraph],
    pub val: &'d [SegmentedGraph],
    pub test: &'d [SegmentedGraph],
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    /// Accuracy or grouped OPA; `None` when OPA has no ordered pair.
    pub metric: Option<f64>,
    pub loss: f64,
    pub outputs: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Streams {
    shuffle: SegRng,
    select: SegRng,
    dropout: SegRng,
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainerState {
    pub plan: TrainPlan,
    pub model_config: ModelConfig,
    pub params: ParamStore,
    pub table: EmbeddingTable,
    streams: Streams,
    pub iteration: u64,
    pub epochs_done: usize,
    pub finetune_started: bool,
    pub counters: OpCounters,
}

#[derive(Clone, Copy, PartialEq)]
enum Source {
    Grad,
    Fresh,
    Table,
    Skip,
}

pub struct Trainer {
    plan: TrainPlan,
    model: Model,
    table: EmbeddingTable,
    streams: Streams,
    iteration: u64,
    epochs_done: usize,
    finetune_started: bool,
    counters: OpCounters,
    embedder: Box<dyn Embedder>,
}

impl Trainer {
    pub fn new(plan: TrainPlan, config: ModelConfig) -> Result<Self> {
        let model = Model::new(config, plan.seed)?;
        Self::with_model(plan, model)
    }

    pub fn with_model(plan: TrainPlan, model: Model) -> Result<Self> {
        plan.validate()?;
        let seed = plan.seed;
        Ok(Self {
            table: EmbeddingTable::new(model.embed_dim()),
            plan,
            model,
            streams: Streams {
                shuffle: rng::stream(seed, rng::streams::SHUFFLE),
                select: rng::stream(seed, rng::streams::SELECT),
                dropout: rng::stream(seed, rng::streams::DROPOUT),
            },
            iteration: 0,
            epochs_done: 0,
            finetune_started: false,
            counters: OpCounters::default(),
            embedder: Box::new(Sequential),
        })
    }

    pub fn from_state(state: TrainerState) -> Result<Self> {
        let model = Model::from_params(state.model_config, state.params)?;
        if state.table.width() != model.embed_dim() {
            return Err(Error::WidthMismatch { expected: model.embed_dim(), found: state.table.width() });
        }
        state.plan.validate()?;
        Ok(Self {
            plan: state.plan,
            model,
            table: state.table,
            streams: state.streams,
            iteration: state.iteration,
            epochs_done: state.epochs_done,
            finetune_started: state.finetune_started,
            counters: state.counters,
            embedder: Box::new(Sequential),
        })
    }

    pub fn state(&self) -> TrainerState {
        TrainerState {
            plan: self.plan.clone(),
            model_config: self.model.config.clone(),
            params: self.model.params.clone(),
            table: self.table.clone(),
            streams: self.streams.clone(),
            iteration: self.iteration,
            epochs_done: self.epochs_done,
            finetune_started: self.finetune_started,
            counters: self.counters,
        }
    }

    pub fn set_embedder(&mut self, embedder: Box<dyn Embedder>) {
        self.embedder = embedder;
    }

    pub fn plan(&self) -> &TrainPlan {
        &self.plan
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut Model {
        &mut self.model
    }

    pub fn table(&self) -> &EmbeddingTable {
        &self.table
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    pub fn counters(&self) -> OpCounters {
        self.counters
    }

    pub fn is_finished(&self) -> bool {
        self.epochs_done >= self.plan.epochs + self.plan.finetune_epochs
    }

    pub fn next_phase(&self) -> Option<Phase> {
        if self.epochs_done < self.plan.epochs {
            Some(Phase::Train)
        } else if !self.is_finished() {
            Some(Phase::Finetune)
        } else {
            None
        }
    }

    fn head_ids(&self) -> Vec<ParamId> {
        self.model.head.param_ids()
    }

    fn divisor(&self, j: usize) -> f64 {
        match self.plan.pooling {
            Pooling::Mean => j as f64,
            Pooling::Sum => 1.0,
        }
    }

    /// Weights and embedding sources for one graph. Draws the segment
    /// selection and, for `gst-efd`, the keep decisions.
    fn assign(&mut self, j: usize) -> (Vec<f64>, Vec<Source>) {
        let plan = &self.plan;
        let selected = sample_segments(j, plan.segments_per_graph, &mut self.streams.select);
        let s = selected.len();
        let mut is_sel = vec![false; j];
        for &k in &selected {
            is_sel[k] = true;
        }
        let pick = |sel: bool, other: Source| if sel { Source::Grad } else { other };
        match plan.variant {
            Variant::Full | Variant::Gst => (vec![1.0; j], is_sel.iter().map(|&x| pick(x, Source::Fresh)).collect()),
            Variant::GstE => (vec![1.0; j], is_sel.iter().map(|&x| pick(x, Source::Table)).collect()),
            Variant::GstOne => {
                let w = gradient_segment_weight(j, s, 0.0);
                let weights = is_sel.iter().map(|&x| if x { w } else { 0.0 }).collect();
                (weights, is_sel.iter().map(|&x| pick(x, Source::Skip)).collect())
            }
            Variant::GstEfd => {
                let a = sed_weights(j, &selected, plan.keep_prob, &mut self.streams.dropout)
                    .expect("plan validated and selection in range");
                let sources = a
                    .selected
                    .iter()
                    .zip(&a.weights)
                    .map(|(&sel, &w)| if sel { Source::Grad } else if w == 0.0 { Source::Skip } else { Source::Table })
                    .collect();
                (a.weights, sources)
            }
        }
    }

    /// One optimizer step over `batch`.
    pub fn train_step(&mut self, batch: &[&SegmentedGraph]) -> Result<StepStats> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if self.plan.variant == Variant::Full {
            if let Some(sg) = batch.iter().find(|sg| sg.num_segments() != 1) {
                return Err(Error::InvalidArgument(alloc::format!(
                    "full training expects unsegmented graphs, graph {} has {} segments",
                    sg.parent,
                    sg.num_segments()
                )));
            }
        }
        let mut stats = StepStats { graphs: batch.len(), ..StepStats::default() };
        stats.counters.steps = 1;

        let assignments: Vec<(Vec<f64>, Vec<Source>)> =
            batch.iter().map(|sg| self.assign(sg.num_segments())).collect();

        // Grad-disabled work for the whole batch: recomputed segments and
        // lazy warm-up of table entries that were never written.
        let mut nograd: Vec<&Segment> = Vec::new();
        let mut warm = 0;
        for (sg, (_, sources)) in batch.iter().zip(&assignments) {
            for (seg, src) in sg.segments.iter().zip(sources) {
                match src {
                    Source::Fresh => {
                        stats.counters.nograd_nodes += seg.node_count() as u64;
                        nograd.push(seg);
                    }
                    Source::Table if self.table.lookup(sg.parent, seg.segment_id).is_none() => {
                        stats.counters.warmup_nodes += seg.node_count() as u64;
                        nograd.push(seg);
                        warm += 1;
                    }
                    Source::Skip if !matches!(self.plan.variant, Variant::GstOne) => {
                        stats.counters.skipped_lookups += 1;
                    }
                    _ => {}
                }
            }
        }
        let computed = self.embedder.embed_all(&self.model.backbone, &self.model.params, &nograd)?;
        let mut fresh: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
        for (seg, emb) in nograd.iter().zip(computed) {
            let key = (seg.parent_graph_id, seg.segment_id);
            if self.plan.variant.uses_table() {
                self.table.insert_or_update(key.0, key.1, emb)?;
            } else {
                fresh.insert(key, emb);
            }
        }
        debug_assert!(warm == 0 || self.plan.variant.uses_table());

        let model = &self.model;
        let params = &model.params;
        let mut tape = Tape::new();
        let mut outputs: Vec<Var> = Vec::with_capacity(batch.len());
        let mut writes: Vec<(usize, usize, Vec<f64>)> = Vec::new();
        for (sg, (weights, sources)) in batch.iter().zip(&assignments) {
            let j = sg.num_segments();
            let mut terms = Vec::with_capacity(j);
            for ((seg, src), &w) in sg.segments.iter().zip(sources).zip(weights) {
                let var = match src {
                    Source::Skip => continue,
                    Source::Grad => {
                        let required = tape.retained_nodes() + seg.node_count();
                        if let Some(budget) = self.plan.budget_nodes {
                            if required > budget {
                                return Err(Error::BudgetExceeded { required, budget });
                            }
                        }
                        let v = model.backbone.forward(params, seg, &mut tape)?;
                        stats.counters.grad_nodes += seg.node_count() as u64;
                        stats.grad_segments.push((sg.parent, seg.segment_id));
                        if self.plan.variant.uses_table() {
                            writes.push((sg.parent, seg.segment_id, tape.value(v).data().to_vec()));
                        }
                        v
                    }
                    Source::Fresh => {
                        let emb = fresh.remove(&(sg.parent, seg.segment_id)).expect("computed above");
                        tape.constant(Matrix::row_vector(emb))
                    }
                    Source::Table => {
                        let hit = self
                            .table
                            .lookup(sg.parent, seg.segment_id)
                            .ok_or(Error::MissingTableEntry { graph: sg.parent, segment: seg.segment_id })?;
                        stats.counters.lookups += 1;
                        stats.lookups.push((sg.parent, seg.segment_id, hit.staleness));
                        tape.constant(Matrix::row_vector(hit.embedding.to_vec()))
                    }
                };
                terms.push((var, w));
            }
            let pooled = tape.weighted_sum(terms, self.divisor(j));
            outputs.push(model.head.forward(params, &mut tape, pooled)?);
        }
        let loss = self.batch_loss(&mut tape, batch, &outputs, &mut stats)?;
        stats.retained_nodes = tape.retained_nodes();
        stats.loss = tape.scalar(loss);
        tape.backward(loss, &mut self.model.params)?;
        drop(tape);
        optimizer_step(&mut self.model.params, &self.plan.adam(), |_| true)?;

        for (g, s, emb) in writes {
            self.table.insert_or_update(g, s, emb)?;
        }
        self.finish_step(&stats);
        Ok(stats)
    }

    fn finish_step(&mut self, stats: &StepStats) {
        self.iteration += 1;
        self.table.advance();
        self.counters.add(&stats.counters);
    }

    fn batch_loss(
        &self,
        tape: &mut Tape<'_>,
        batch: &[&SegmentedGraph],
        outputs: &[Var],
        stats: &mut StepStats,
    ) -> Result<Var> {
        match self.plan.loss {
            LossKind::CrossEntropy => {
                let mut losses = Vec::with_capacity(batch.len());
                for (sg, &out) in batch.iter().zip(outputs) {
                    let class = class_of(sg)?;
                    if metrics::argmax(tape.value(out).data()) == class {
                        stats.correct += 1;
                    }
                    losses.push(tape.cross_entropy(out, class)?);
                }
                Ok(tape.mean_of(losses))
            }
            LossKind::PairwiseHinge => {
                let mut targets = Vec::with_capacity(batch.len());
                let mut groups = Vec::with_capacity(batch.len());
                for (sg, &out) in batch.iter().zip(outputs) {
                    let t = target_of(sg)?;
                    let g = group_of(sg);
                    stats.ranked.push((tape.scalar(out), t, g));
                    targets.push(t);
                    groups.push(g);
                }
                let total = tape.pairwise_hinge(outputs.to_vec(), targets, groups);
                Ok(tape.scale(total, 1.0 / batch.len() as f64))
            }
        }
    }

    /// Batches of graph indices for one epoch. Ranking batches never mix
    /// groups, so every pair in the hinge loss compares configurations of the
    /// same base graph.
    fn batches(&mut self, graphs: &[SegmentedGraph]) -> Vec<Vec<usize>> {
        let bs = self.plan.batch_size;
        let shuffle = self.plan.shuffle;
        let rng = &mut self.streams.shuffle;
        let mut chunks: Vec<Vec<usize>> = match self.plan.loss {
            LossKind::CrossEntropy => {
                let mut order: Vec<usize> = (0..graphs.len()).collect();
                if shuffle {
                    order.shuffle(rng);
                }
                order.chunks(bs).map(<[usize]>::to_vec).collect()
            }
            LossKind::PairwiseHinge => {
                let mut by_group: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
                for (i, sg) in graphs.iter().enumerate() {
                    by_group.entry(group_of(sg)).or_default().push(i);
                }
                let mut chunks = Vec::new();
                for (_, mut members) in by_group {
                    if shuffle {
                        members.shuffle(rng);
                    }
                    chunks.extend(members.chunks(bs).map(<[usize]>::to_vec));
                }
                if shuffle {
                    chunks.shuffle(rng);
                }
                chunks
            }
        };
        chunks.retain(|c| !c.is_empty());
        chunks
    }

    /// One pass of main training over `train`.
    pub fn train_epoch(&mut self, train: &[SegmentedGraph]) -> Result<EpochRecord> {
        let start = self.counters;
        let mut acc = EpochAccumulator::default();
        for chunk in self.batches(train) {
            let batch: Vec<&SegmentedGraph> = chunk.iter().map(|&i| &train[i]).collect();
            let stats = self.train_step(&batch)?;
            acc.push(&stats);
        }
        self.epochs_done += 1;
        Ok(acc.record(self, Phase::Train, start))
    }

    /// Recomputes every table entry for `graphs` with the current backbone.
    pub fn refresh_table(&mut self, graphs: &[SegmentedGraph]) -> Result<()> {
        let (backbone, params, embedder) = (&self.model.backbone, &self.model.params, &self.embedder);
        self.table.refresh_with(graphs, |segs| embedder.embed_all(backbone, params, segs))
    }

    /// One step of head-only training on table embeddings with unit weights.
    pub fn finetune_step(&mut self, batch: &[&SegmentedGraph]) -> Result<StepStats> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let mut stats = StepStats { graphs: batch.len(), ..StepStats::default() };
        stats.counters.steps = 1;
        let model = &self.model;
        let mut tape = Tape::new();
        let mut outputs = Vec::with_capacity(batch.len());
        for sg in batch {
            let j = sg.num_segments();
            let mut rows: Vec<(&[f64], f64)> = Vec::with_capacity(j);
            for seg in &sg.segments {
                let hit = self
                    .table
                    .lookup(sg.parent, seg.segment_id)
                    .ok_or(Error::MissingTableEntry { graph: sg.parent, segment: seg.segment_id })?;
                stats.counters.lookups += 1;
                rows.push((hit.embedding, 1.0));
            }
            let pooled = tensor::weighted_sum(&rows, self.table.width(), self.divisor(j));
            let v = tape.constant(Matrix::row_vector(pooled));
            outputs.push(model.head.forward(&model.params, &mut tape, v)?);
        }
        let loss = self.batch_loss(&mut tape, batch, &outputs, &mut stats)?;
        stats.loss = tape.scalar(loss);
        tape.backward(loss, &mut self.model.params)?;
        drop(tape);
        let head = self.head_ids();
        optimizer_step(&mut self.model.params, &self.plan.finetune_adam(), |id| head.contains(&id))?;
        self.finish_step(&stats);
        Ok(stats)
    }

    /// One finetuning epoch. The first call refreshes the whole table so
    /// every entry is current before the head sees it.
    pub fn finetune_epoch(&mut self, train: &[SegmentedGraph]) -> Result<EpochRecord> {
        if !self.finetune_started {
            self.refresh_table(train)?;
            self.finetune_started = true;
        }
        let start = self.counters;
        let mut acc = EpochAccumulator::default();
        for chunk in self.batches(train) {
            let batch: Vec<&SegmentedGraph> = chunk.iter().map(|&i| &train[i]).collect();
            let stats = self.finetune_step(&batch)?;
            acc.push(&stats);
        }
        self.epochs_done += 1;
        Ok(acc.record(self, Phase::Finetune, start))
    }

    /// Refreshes the table, then trains only the head for `epochs` passes.
    pub fn finetune_head(&mut self, train: &[SegmentedGraph], epochs: usize) -> Result<Vec<EpochRecord>> {
        self.refresh_table(train)?;
        self.finetune_started = true;
        (0..epochs).map(|_| self.finetune_epoch(train)).collect()
    }

    /// Runs the next epoch of the plan (main training, then finetuning) and
    /// evaluates the validation and test graphs.
    pub fn run_epoch(&mut self, data: &RunData<'_>) -> Result<EpochRecord> {
        let mut record = match self.next_phase() {
            Some(Phase::Train) => self.train_epoch(data.train)?,
            Some(Phase::Finetune) => self.finetune_epoch(data.train)?,
            None => return Err(Error::InvalidArgument("the plan has no epochs left".into())),
        };
        if !data.val.is_empty() {
            record.val_metric = self.evaluate(data.val)?.metric;
        }
        if !data.test.is_empty() {
            record.test_metric = self.evaluate(data.test)?.metric;
        }
        Ok(record)
    }

    /// Runs every remaining epoch.
    pub fn run(&mut self, data: &RunData<'_>) -> Result<Vec<EpochRecord>> {
        let mut log = Vec::new();
        while !self.is_finished() {
            log.push(self.run_epoch(data)?);
        }
        Ok(log)
    }

    /// Head output for one graph from fresh grad-disabled forwards of every
    /// segment, pooled with unit weights.
    pub fn predict(&self, sg: &SegmentedGraph) -> Result<Vec<f64>> {
        let segs: Vec<&Segment> = sg.segments.iter().collect();
        let embs = self.embedder.embed_all(&self.model.backbone, &self.model.params, &segs)?;
        self.head_on(sg.num_segments(), embs.iter().map(Vec::as_slice))
    }

    fn head_on<'e>(&self, j: usize, embs: impl Iterator<Item = &'e [f64]>) -> Result<Vec<f64>> {
        let rows: Vec<(&[f64], f64)> = embs.map(|e| (e, 1.0)).collect();
        let pooled = tensor::weighted_sum(&rows, self.model.embed_dim(), self.divisor(j));
        self.model.head.predict(&self.model.params, &pooled)
    }

    /// Test-distribution evaluation: every segment forwarded fresh.
    pub fn evaluate(&self, graphs: &[SegmentedGraph]) -> Result<EvalResult> {
        let outputs = graphs.iter().map(|sg| self.predict(sg)).collect::<Result<Vec<_>>>()?;
        self.score(graphs, outputs)
    }

    /// Same pooling as [`Self::evaluate`] but from table entries.
    pub fn evaluate_from_table(&self, graphs: &[SegmentedGraph]) -> Result<EvalResult> {
        let outputs = graphs
            .iter()
            .map(|sg| {
                let embs = sg
                    .segments
                    .iter()
                    .map(|seg| {
                        self.table
                            .lookup(sg.parent, seg.segment_id)
                            .map(|l| l.embedding)
                            .ok_or(Error::MissingTableEntry { graph: sg.parent, segment: seg.segment_id })
                    })
                    .collect::<Result<Vec<_>>>()?;
                self.head_on(sg.num_segments(), embs.into_iter())
            })
            .collect::<Result<Vec<_>>>()?;
        self.score(graphs, outputs)
    }

    fn score(&self, graphs: &[SegmentedGraph], outputs: Vec<Vec<f64>>) -> Result<EvalResult> {
        if graphs.is_empty() {
            return Ok(EvalResult { metric: None, loss: 0.0, outputs });
        }
        match self.plan.loss {
            LossKind::CrossEntropy => {
                let classes = graphs.iter().map(class_of).collect::<Result<Vec<_>>>()?;
                let mut loss = 0.0;
                for (o, &c) in outputs.iter().zip(&classes) {
                    loss += metrics::cross_entropy(o, c)?;
                }
                let metric = Some(metrics::accuracy(&outputs, &classes));
                Ok(EvalResult { metric, loss: loss / graphs.len() as f64, outputs })
            }
            LossKind::PairwiseHinge => {
                let preds: Vec<f64> = outputs.iter().map(|o| o[0]).collect();
                let targets = graphs.iter().map(target_of).collect::<Result<Vec<_>>>()?;
                let groups: Vec<u32> = graphs.iter().map(group_of).collect();
                let (loss, _) = metrics::grouped_pairwise_hinge_with_grad(&preds, &targets, &groups);
                let metric = metrics::grouped_opa(&preds, &targets, &groups);
                Ok(EvalResult { metric, loss: loss / graphs.len() as f64, outputs })
            }
        }
    }

    /// Distance between table entries and fresh forwards on up to `sample`
    /// keys, chosen without disturbing the training streams.
    pub fn staleness_trace(&self, graphs: &[SegmentedGraph], sample: usize) -> Result<StalenessTrace> {
        let by_id: BTreeMap<usize, &SegmentedGraph> = graphs.iter().map(|sg| (sg.parent, sg)).collect();
        let keys: Vec<(usize, usize)> =
            self.table.iter().map(|(k, _)| k).filter(|(g, _)| by_id.contains_key(g)).collect();
        if keys.is_empty() {
            return Err(Error::EmptyTable);
        }
        let mut rng = rng::stream(self.plan.seed ^ self.iteration, rng::streams::TRACE);
        let mut picked = rand::seq::index::sample(&mut rng, keys.len(), sample.min(keys.len())).into_vec();
        picked.sort_unstable();
        let segs: Vec<&Segment> = picked.iter().map(|&i| &by_id[&keys[i].0].segments[keys[i].1]).collect();
        let fresh = self.embedder.embed_all(&self.model.backbone, &self.model.params, &segs)?;
        let (mut max_d, mut sum_d, mut max_s, mut sum_s) = (0.0f64, 0.0, 0u64, 0u64);
        for (&i, f) in picked.iter().zip(&fresh) {
            let hit = self.table.lookup(keys[i].0, keys[i].1).expect("key listed from the table");
            let d = libm::sqrt(hit.embedding.iter().zip(f).map(|(a, b)| (a - b) * (a - b)).sum::<f64>());
            max_d = max_d.max(d);
            sum_d += d;
            max_s = max_s.max(hit.staleness);
            sum_s += hit.staleness;
        }
        let n = picked.len() as f64;
        Ok(StalenessTrace {
            sampled: picked.len(),
            max_distance: max_d,
            mean_distance: sum_d / n,
            max_staleness: max_s,
            mean_staleness: sum_s as f64 / n,
        })
    }
}

#[derive(Default)]
struct EpochAccumulator {
    loss: f64,
    steps: usize,
    graphs: usize,
    correct: usize,
    ranked: Vec<(f64, f64, u32)>,
    peak: usize,
}

impl EpochAccumulator {
    fn push(&mut self, s: &StepStats) {
        self.loss += s.loss;
        self.steps += 1;
        self.graphs += s.graphs;
        self.correct += s.correct;
        self.ranked.extend_from_slice(&s.ranked);
        self.peak = self.peak.max(s.retained_nodes);
    }

    fn record(self, t: &Trainer, phase: Phase, start: OpCounters) -> EpochRecord {
        let train_metric = match t.plan.loss {
            LossKind::CrossEntropy if self.graphs > 0 => Some(self.correct as f64 / self.graphs as f64),
            LossKind::CrossEntropy => None,
            LossKind::PairwiseHinge => {
                let p: Vec<f64> = self.ranked.iter().map(|r| r.0).collect();
                let y: Vec<f64> = self.ranked.iter().map(|r| r.1).collect();
                let g: Vec<u32> = self.ranked.iter().map(|r| r.2).collect();
                metrics::grouped_opa(&p, &y, &g)
            }
        };
        EpochRecord {
            epoch: t.epochs_done,
            phase,
            iteration: t.iteration,
            loss: if self.steps > 0 { self.loss / self.steps as f64 } else { 0.0 },
            train_metric,
            val_metric: None,
            test_metric: None,
            counters: t.counters.since(&start),
            peak_retained_nodes: self.peak,
            staleness: t.table.staleness_stats().ok(),
            trace: None,
            wall_ms: None,
        }
    }
}

fn class_of(sg: &SegmentedGraph) -> Result<usize> {
    match sg.label {
        Label::Class { class, .. } => Ok(class),
        Label::Target(_) => Err(Error::InvalidDataset("cross-entropy needs class labels".into())),
    }
}

fn target_of(sg: &SegmentedGraph) -> Result<f64> {
    match sg.label {
        Label::Target(t) => Ok(t),
        Label::Class { .. } => Err(Error::InvalidDataset("pairwise hinge needs real targets".into())),
    }
}

/// Ranking group; a graph without one forms its own group.
fn group_of(sg: &SegmentedGraph) -> u32 {
    sg.group.unwrap_or(u32::MAX - sg.parent as u32)
}
