//! Exact brute-force 1:N search with deterministic top-k.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::{dot, dot4};
use super::store::{EmbeddingStore, RecordId};
use crate::error::{Error, Result};

/// Gallery rows scored per parallel work item.
const CHUNK_ROWS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub subject_id: u64,
    pub impression_id: u32,
    pub score: f32,
}

impl SearchHit {
    fn new(id: RecordId, score: f32) -> Self {
        Self {
            subject_id: id.subject_id,
            impression_id: id.impression_id,
            score,
        }
    }

    /// Total ranking order: higher score first, then ascending
    /// `(subject_id, impression_id)`.
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then(self.subject_id.cmp(&other.subject_id))
            .then(self.impression_id.cmp(&other.impression_id))
    }
}

/// Heap entry ordered so that the worst-ranked hit sits on top.
struct Worst(SearchHit);

impl PartialEq for Worst {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Worst {}
impl PartialOrd for Worst {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Worst {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.rank_cmp(&other.0)
    }
}

/// Bounded collector of the `k` best hits.
pub struct TopK {
    k: usize,
    heap: BinaryHeap<Worst>,
}

impl TopK {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    #[inline]
    pub fn push(&mut self, hit: SearchHit) {
        if self.k == 0 {
            return;
        }
        if self.heap.len() < self.k {
            self.heap.push(Worst(hit));
        } else if let Some(top) = self.heap.peek() {
            if hit.rank_cmp(&top.0) == Ordering::Less {
                self.heap.pop();
                self.heap.push(Worst(hit));
            }
        }
    }

    fn merge(mut self, other: TopK) -> TopK {
        for w in other.heap {
            self.push(w.0);
        }
        self
    }

    pub fn into_sorted(self) -> Vec<SearchHit> {
        let mut v: Vec<SearchHit> = self.heap.into_iter().map(|w| w.0).collect();
        v.sort_by(SearchHit::rank_cmp);
        v
    }
}

/// Similarity of two unit-norm embeddings (inner product).
pub fn score(a: &[f32], b: &[f32]) -> Result<f32> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "cannot score embeddings of dimension {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(dot(a, b))
}

fn check(store: &EmbeddingStore, dim: usize) -> Result<()> {
    if store.is_empty() {
        return Err(Error::Empty("search against an empty gallery".into()));
    }
    if store.dim() != dim {
        return Err(Error::Shape(format!(
            "gallery has dimension {}, probe has dimension {dim}",
            store.dim()
        )));
    }
    Ok(())
}

/// Top `top_k` gallery records for one probe, best first. Chunks are scored
/// in parallel and merged in a fixed order, so the result does not depend
/// on the thread count.
pub fn search(store: &EmbeddingStore, probe: &[f32], top_k: usize) -> Result<Vec<SearchHit>> {
    check(store, probe.len())?;
    let dim = store.dim();
    let ids = store.ids();
    let top = store
        .values()
        .par_chunks(CHUNK_ROWS * dim)
        .enumerate()
        .map(|(c, block)| {
            let mut top = TopK::new(top_k);
            let base = c * CHUNK_ROWS;
            for (r, row) in block.chunks_exact(dim).enumerate() {
                top.push(SearchHit::new(ids[base + r], dot(probe, row)));
            }
            top
        })
        .reduce(|| TopK::new(top_k), TopK::merge);
    Ok(top.into_sorted())
}

/// Top-k lists for many probes. Probes are processed four at a time
/// against each gallery row so every row is streamed from memory once per
/// group; scores are bit-identical to [`search`].
pub fn search_batch(store: &EmbeddingStore, probes: &[Vec<f32>], top_k: usize) -> Result<Vec<Vec<SearchHit>>> {
    for p in probes {
        check(store, p.len())?;
    }
    if probes.is_empty() {
        return Ok(Vec::new());
    }
    let dim = store.dim();
    let ids = store.ids();
    let groups: Vec<&[Vec<f32>]> = probes.chunks(4).collect();
    let partial: Vec<Vec<TopK>> = store
        .values()
        .par_chunks(CHUNK_ROWS * dim)
        .enumerate()
        .map(|(c, block)| {
            let base = c * CHUNK_ROWS;
            let mut tops: Vec<TopK> = (0..probes.len()).map(|_| TopK::new(top_k)).collect();
            for (g, group) in groups.iter().enumerate() {
                if group.len() == 4 {
                    let quad = [&group[0][..], &group[1][..], &group[2][..], &group[3][..]];
                    for (r, row) in block.chunks_exact(dim).enumerate() {
                        let s = dot4(quad, row);
                        let id = ids[base + r];
                        for (j, &sj) in s.iter().enumerate() {
                            tops[g * 4 + j].push(SearchHit::new(id, sj));
                        }
                    }
                } else {
                    for (j, p) in group.iter().enumerate() {
                        for (r, row) in block.chunks_exact(dim).enumerate() {
                            tops[g * 4 + j].push(SearchHit::new(ids[base + r], dot(p, row)));
                        }
                    }
                }
            }
            tops
        })
        .collect();
    let mut merged: Vec<TopK> = (0..probes.len()).map(|_| TopK::new(top_k)).collect();
    for chunk in partial {
        for (m, t) in merged.iter_mut().zip(chunk) {
            let taken = std::mem::replace(m, TopK::new(0));
            *m = taken.merge(t);
        }
    }
    Ok(merged.into_iter().map(TopK::into_sorted).collect())
}

/// Score of `probe` against every gallery record, in store order.
pub fn score_all(store: &EmbeddingStore, probe: &[f32]) -> Result<Vec<f32>> {
    check(store, probe.len())?;
    let dim = store.dim();
    Ok(store
        .values()
        .par_chunks(CHUNK_ROWS * dim)
        .flat_map_iter(|block| block.chunks_exact(dim).map(|row| dot(probe, row)).collect::<Vec<_>>())
        .collect())
}
