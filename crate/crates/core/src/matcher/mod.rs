//! Embedding storage, similarity scoring, score fusion and 1:N search.

pub mod bench;
pub mod fusion;
pub mod kernel;
pub mod scores;
pub mod search;
pub mod store;

pub use bench::{bench_gallery, bench_throughput, BenchConfig, BenchReport};
pub use fusion::{fuse, fuse_scores, FusionWeights};
pub use scores::ScoreSet;
pub use search::{score, score_all, search, search_batch, SearchHit};
pub use store::{normalized, EmbeddingStore, RecordId};
