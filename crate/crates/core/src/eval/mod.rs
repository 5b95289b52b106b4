//! Authentication and search evaluation protocols.

mod gallery;
mod kfold;
mod metrics;
mod pairs;
mod protocol;
mod report;

pub use gallery::{build_galleries, GalleryPlan, Identity};
pub use kfold::{kfold_split, FoldSplit};
pub use metrics::{
    closed_set_search_eval, cmc_from_scores, det_from_scores, open_set_search_eval, tar_at_far, threshold_sweep,
    true_subject_ranks, CmcPoint, DetPoint, TarPoint,
};
pub use pairs::{count_pairs, enumerate_pairs, labels_from_counts, pair_counts, score_pairs, PairIndex};
pub use protocol::Protocol;
pub use report::{mean_std, EvalReport, FoldSummary};
