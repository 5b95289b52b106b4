//! Naive reference implementations of the evaluation metrics.

/// Smallest candidate threshold with FAR ≤ target, found by scanning every
/// score and its successor; returns `(threshold, tar)`.
pub fn naive_tar(genuine: &[f64], imposter: &[f64], target: f64) -> (f64, f64) {
    let mut candidates: Vec<f64> = genuine.iter().chain(imposter).flat_map(|&s| [s, s.next_up()]).collect();
    candidates.sort_by(f64::total_cmp);
    let n = imposter.len() as f64;
    let t = candidates
        .into_iter()
        .find(|&t| imposter.iter().filter(|&&s| s >= t).count() as f64 / n <= target)
        .unwrap();
    (t, genuine.iter().filter(|&&s| s >= t).count() as f64 / genuine.len() as f64)
}

/// Rank of `truth` among subject-level best scores; ties favour smaller ids.
pub fn naive_rank(truth: u64, row: &[f64], gallery: &[u64]) -> usize {
    let best = |subj: u64| {
        gallery
            .iter()
            .zip(row)
            .filter(|(&g, _)| g == subj)
            .map(|(_, &s)| s)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let mine = best(truth);
    let mut subjects = gallery.to_vec();
    subjects.sort_unstable();
    subjects.dedup();
    1 + subjects
        .iter()
        .filter(|&&s| s != truth && (best(s) > mine || (best(s) == mine && s < truth)))
        .count()
}

pub fn top_score(row: &[f64]) -> f64 {
    row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// `(fpir, fnir)` at threshold `t` by direct counting.
pub fn naive_det(
    mated: &[u64],
    mated_rows: &[Vec<f64>],
    unmated_rows: &[Vec<f64>],
    gallery: &[u64],
    t: f64,
) -> (f64, f64) {
    let fpir = unmated_rows.iter().filter(|r| top_score(r) >= t).count() as f64 / unmated_rows.len() as f64;
    let fnir = mated
        .iter()
        .zip(mated_rows)
        .filter(|(&s, r)| top_score(r) < t || naive_rank(s, r, gallery) != 1)
        .count() as f64
        / mated_rows.len() as f64;
    (fpir, fnir)
}
