//! Probe-vs-gallery throughput measurement.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::search::search_batch;
use super::store::{normalized, EmbeddingStore, RecordId};
use crate::error::{Error, Result};

/// Published embedding-matcher throughput, comparisons per second.
pub const REFERENCE_COMPARISONS_PER_SECOND: f64 = 2.5e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub dim: usize,
    pub gallery_size: usize,
    pub repetitions: usize,
    pub probes_per_repetition: usize,
    pub top_k: usize,
    /// Worker threads for the multi-threaded run; 0 uses every core.
    pub threads: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            dim: 384,
            gallery_size: 1_000_000,
            repetitions: 3,
            probes_per_repetition: 8,
            top_k: 10,
            threads: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub threads: usize,
    /// Comparisons per second for each repetition.
    pub per_repetition: Vec<f64>,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub hardware: String,
    pub single_thread: RunStats,
    pub multi_thread: RunStats,
    pub reference_comparisons_per_second: f64,
    pub meets_reference: bool,
    /// Smallest and largest top-1 score seen, a correctness smoke check.
    pub top1_score_range: (f32, f32),
}

pub fn hardware_description() -> String {
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let model = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        })
        .unwrap_or_else(|| std::env::consts::ARCH.to_string());
    format!("{model}, {cores} logical cores")
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    loop {
        let v: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        if let Ok(u) = normalized(&v) {
            return u;
        }
    }
}

/// Seeded gallery of random unit vectors.
pub fn random_gallery(dim: usize, size: usize, seed: u64) -> Result<EmbeddingStore> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = EmbeddingStore::with_capacity(dim, size)?;
    for i in 0..size {
        store.insert(RecordId::new(i as u64, 0), &random_unit(&mut rng, dim))?;
    }
    Ok(store)
}

fn time_runs(
    gallery: &EmbeddingStore,
    probes: &[Vec<Vec<f32>>],
    top_k: usize,
    threads: usize,
    range: &mut (f32, f32),
) -> Result<RunStats> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    let threads = pool.current_num_threads();
    let mut per_repetition = Vec::with_capacity(probes.len());
    for rep in probes {
        let start = Instant::now();
        let hits = pool.install(|| search_batch(gallery, rep, top_k))?;
        let secs = start.elapsed().as_secs_f64().max(1e-9);
        for h in hits.iter().filter_map(|h| h.first()) {
            range.0 = range.0.min(h.score);
            range.1 = range.1.max(h.score);
        }
        per_repetition.push((rep.len() * gallery.len()) as f64 / secs);
    }
    let mean = per_repetition.iter().sum::<f64>() / per_repetition.len().max(1) as f64;
    let min = per_repetition.iter().copied().fold(f64::INFINITY, f64::min);
    let max = per_repetition.iter().copied().fold(0.0, f64::max);
    Ok(RunStats {
        threads,
        per_repetition,
        mean,
        min,
        max,
    })
}

/// Measure throughput against an existing gallery with the given probes,
/// reused for every repetition.
pub fn bench_gallery(gallery: &EmbeddingStore, probes: &[Vec<f32>], config: &BenchConfig) -> Result<BenchReport> {
    if config.repetitions == 0 || probes.is_empty() {
        return Err(Error::Config("benchmark needs at least one repetition and one probe".into()));
    }
    let reps: Vec<Vec<Vec<f32>>> = (0..config.repetitions).map(|_| probes.to_vec()).collect();
    let mut range = (f32::INFINITY, f32::NEG_INFINITY);
    let single_thread = time_runs(gallery, &reps, config.top_k, 1, &mut range)?;
    let multi_thread = time_runs(gallery, &reps, config.top_k, config.threads, &mut range)?;
    let meets_reference = multi_thread.mean >= REFERENCE_COMPARISONS_PER_SECOND;
    Ok(BenchReport {
        config: config.clone(),
        hardware: hardware_description(),
        single_thread,
        multi_thread,
        reference_comparisons_per_second: REFERENCE_COMPARISONS_PER_SECOND,
        meets_reference,
        top1_score_range: range,
    })
}

/// Random-gallery benchmark: `gallery_size` unit vectors of `dim`
/// dimensions, fresh random probes per repetition.
pub fn bench_throughput(config: &BenchConfig) -> Result<BenchReport> {
    if config.dim == 0 || config.gallery_size == 0 || config.repetitions == 0 || config.probes_per_repetition == 0 {
        return Err(Error::Config("benchmark sizes must be positive".into()));
    }
    let gallery = random_gallery(config.dim, config.gallery_size, config.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
    let probes: Vec<Vec<f32>> = (0..config.probes_per_repetition)
        .map(|_| random_unit(&mut rng, config.dim))
        .collect();
    bench_gallery(&gallery, &probes, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_unit_gallery_scores_one() {
        let mut g = EmbeddingStore::new(1).unwrap();
        for i in 0..1000 {
            g.insert(RecordId::new(i, 0), &[1.0]).unwrap();
        }
        let cfg = BenchConfig {
            dim: 1,
            gallery_size: 1000,
            repetitions: 2,
            probes_per_repetition: 5,
            top_k: 3,
            threads: 2,
            seed: 0,
        };
        let report = bench_gallery(&g, &vec![vec![1.0]; 5], &cfg).unwrap();
        assert_eq!(report.top1_score_range, (1.0, 1.0));
        assert_eq!(report.single_thread.threads, 1);
        assert!(report.single_thread.mean > 0.0);
    }
}
