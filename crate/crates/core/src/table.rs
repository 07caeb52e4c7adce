//! Historical segment-embedding table with staleness metadata.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Backbone;
use crate::params::ParamStore;
use crate::partition::{Segment, SegmentedGraph};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub embedding: Vec<f64>,
    pub written_at: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lookup<'t> {
    pub embedding: &'t [f64],
    pub staleness: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StalenessStats {
    pub max: u64,
    pub mean: f64,
    /// staleness → number of entries
    pub histogram: BTreeMap<u64, usize>,
}

/// Maps `(graph id, segment id)` to the last embedding written for it.
/// Entries are replaced whole, so a reader never sees a partial vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    width: usize,
    current_iteration: u64,
    #[serde(with = "keyed")]
    entries: BTreeMap<(usize, usize), TableEntry>,
}

/// Snapshot keys are `"graph_id:segment_id"` strings.
mod keyed {
    use alloc::collections::BTreeMap;
    use alloc::format;
    use alloc::string::String;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::TableEntry;

    pub fn serialize<S: Serializer>(map: &BTreeMap<(usize, usize), TableEntry>, s: S) -> Result<S::Ok, S::Error> {
        let keyed: BTreeMap<String, &TableEntry> = map.iter().map(|((g, j), e)| (format!("{g}:{j}"), e)).collect();
        keyed.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<(usize, usize), TableEntry>, D::Error> {
        let keyed = BTreeMap::<String, TableEntry>::deserialize(d)?;
        keyed
            .into_iter()
            .map(|(k, e)| {
                let (g, j) = k.split_once(':').ok_or_else(|| D::Error::custom(format!("bad table key `{k}`")))?;
                let g = g.parse().map_err(|_| D::Error::custom(format!("bad graph id in `{k}`")))?;
                let j = j.parse().map_err(|_| D::Error::custom(format!("bad segment id in `{k}`")))?;
                Ok(((g, j), e))
            })
            .collect()
    }
}

impl EmbeddingTable {
    pub fn new(width: usize) -> Self {
        Self { width, current_iteration: 0, entries: BTreeMap::new() }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn current_iteration(&self) -> u64 {
        self.current_iteration
    }

    /// Advances the clock by one optimizer step.
    pub fn advance(&mut self) {
        self.current_iteration += 1;
    }

    pub fn set_iteration(&mut self, iteration: u64) {
        debug_assert!(self.entries.values().all(|e| e.written_at <= iteration));
        self.current_iteration = iteration;
    }

    pub fn lookup(&self, graph: usize, segment: usize) -> Option<Lookup<'_>> {
        self.entries.get(&(graph, segment)).map(|e| Lookup {
            embedding: &e.embedding,
            staleness: self.current_iteration - e.written_at,
        })
    }

    pub fn insert_or_update(&mut self, graph: usize, segment: usize, embedding: Vec<f64>) -> Result<()> {
        if embedding.len() != self.width {
            return Err(Error::WidthMismatch { expected: self.width, found: embedding.len() });
        }
        let written_at = self.current_iteration;
        self.entries.insert((graph, segment), TableEntry { embedding, written_at });
        Ok(())
    }

    /// Recomputes every segment of `graphs` with the current backbone.
    pub fn refresh_all(&mut self, backbone: &Backbone, params: &ParamStore, graphs: &[SegmentedGraph]) -> Result<()> {
        self.refresh_with(graphs, |segs| segs.iter().map(|s| backbone.embed(params, s)).collect())
    }

    /// [`Self::refresh_all`] with a caller-supplied batch embedder, e.g. one
    /// that fans the forwards out over threads.
    pub fn refresh_with(
        &mut self,
        graphs: &[SegmentedGraph],
        embed_all: impl FnOnce(&[&Segment]) -> Result<Vec<Vec<f64>>>,
    ) -> Result<()> {
        let segs: Vec<&Segment> = graphs.iter().flat_map(|g| g.segments.iter()).collect();
        let embeddings = embed_all(&segs)?;
        for (seg, emb) in segs.iter().zip(embeddings) {
            self.insert_or_update(seg.parent_graph_id, seg.segment_id, emb)?;
        }
        Ok(())
    }

    pub fn staleness_stats(&self) -> Result<StalenessStats> {
        if self.entries.is_empty() {
            return Err(Error::EmptyTable);
        }
        let mut histogram = BTreeMap::new();
        let mut total = 0u128;
        let mut max = 0;
        for e in self.entries.values() {
            let s = self.current_iteration - e.written_at;
            *histogram.entry(s).or_insert(0) += 1;
            total += u128::from(s);
            max = max.max(s);
        }
        Ok(StalenessStats { max, mean: total as f64 / self.entries.len() as f64, histogram })
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), &TableEntry)> {
        self.entries.iter().map(|(k, v)| (*k, v))
    }
}
