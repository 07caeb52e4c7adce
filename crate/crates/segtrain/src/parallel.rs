//! Scoped worker threads for grad-disabled forwards and independent jobs.

use segtrain_core::engine::Embedder;
use segtrain_core::model::Backbone;
use segtrain_core::params::ParamStore;
use segtrain_core::Segment;

/// Caps the number of worker threads.
pub const THREADS_VAR: &str = "SEGTRAIN_THREADS";

/// Available parallelism, capped by `SEGTRAIN_THREADS` when it is set.
pub fn thread_count() -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var(THREADS_VAR).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        Some(cap) if cap > 0 => cap.min(available),
        _ => available,
    }
}

/// Applies `f` to every item on up to `threads` threads. Output order
/// matches input order.
pub fn map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if threads <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    let f = &f;
    std::thread::scope(|scope| {
        let handles: Vec<_> =
            items.chunks(chunk).map(|c| scope.spawn(move || c.iter().map(f).collect::<Vec<R>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker thread panicked")).collect()
    })
}

/// Embeds segments on several threads. Each embedding is computed exactly
/// as in the sequential path, so results do not depend on the thread count.
#[derive(Clone, Copy, Debug)]
pub struct ThreadedEmbedder {
    pub threads: usize,
}

impl ThreadedEmbedder {
    pub fn new(threads: usize) -> Self {
        Self { threads: threads.max(1) }
    }
}

impl Embedder for ThreadedEmbedder {
    fn embed_all(
        &self,
        backbone: &Backbone,
        params: &ParamStore,
        segments: &[&Segment],
    ) -> segtrain_core::Result<Vec<Vec<f64>>> {
        map(segments, self.threads, |s| backbone.embed(params, s)).into_iter().collect()
    }
}
