//! Genuine/imposter pair enumeration for 1:1 authentication.

use crate::error::{Error, Result};
use crate::matcher::{score, EmbeddingStore, ScoreSet};

/// Unordered index pairs `(i, j)` with `i < j` into a labeled impression list.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairIndex {
    pub genuine: Vec<(usize, usize)>,
    pub imposter: Vec<(usize, usize)>,
}

fn check_labels(subjects: &[u64]) -> Result<()> {
    let mut sorted = subjects.to_vec();
    sorted.sort_unstable();
    let distinct = {
        let mut d = sorted.clone();
        d.dedup();
        d.len()
    };
    if distinct < 2 {
        return Err(Error::Protocol(format!(
            "authentication needs at least 2 fingers, got {distinct}; no imposter pairs exist"
        )));
    }
    if sorted.windows(2).all(|w| w[0] != w[1]) {
        return Err(Error::Protocol("no finger has 2 impressions; no genuine pairs exist".into()));
    }
    Ok(())
}

/// All within-finger pairs (genuine) and all cross-finger pairs (imposter),
/// each unordered pair exactly once, in lexicographic order.
pub fn enumerate_pairs(subjects: &[u64]) -> Result<PairIndex> {
    check_labels(subjects)?;
    let mut out = PairIndex::default();
    for i in 0..subjects.len() {
        for j in i + 1..subjects.len() {
            if subjects[i] == subjects[j] {
                out.genuine.push((i, j));
            } else {
                out.imposter.push((i, j));
            }
        }
    }
    Ok(out)
}

/// Genuine and imposter pair counts by walking every pair, without storing them.
pub fn count_pairs(subjects: &[u64]) -> Result<(u64, u64)> {
    check_labels(subjects)?;
    let (mut genuine, mut imposter) = (0u64, 0u64);
    for i in 0..subjects.len() {
        let s = subjects[i];
        for &t in &subjects[i + 1..] {
            if s == t {
                genuine += 1;
            } else {
                imposter += 1;
            }
        }
    }
    Ok((genuine, imposter))
}

/// Closed-form counts from impressions per finger:
/// genuine `Σ C(nᵢ, 2)`, imposter `C(Σ nᵢ, 2) − Σ C(nᵢ, 2)`.
pub fn pair_counts(impressions_per_finger: &[u64]) -> (u64, u64) {
    let c2 = |n: u64| n * n.saturating_sub(1) / 2;
    let genuine: u64 = impressions_per_finger.iter().map(|&n| c2(n)).sum();
    let total = c2(impressions_per_finger.iter().sum());
    (genuine, total - genuine)
}

/// Subject label per impression for a vector of impression counts.
pub fn labels_from_counts(impressions_per_finger: &[u64]) -> Vec<u64> {
    impressions_per_finger
        .iter()
        .enumerate()
        .flat_map(|(f, &n)| std::iter::repeat_n(f as u64, n as usize))
        .collect()
}

/// Score every enumerated pair of records in `store`.
pub fn score_pairs(store: &EmbeddingStore) -> Result<ScoreSet> {
    let subjects: Vec<u64> = store.ids().iter().map(|id| id.subject_id).collect();
    let index = enumerate_pairs(&subjects)?;
    let s = |&(i, j): &(usize, usize)| score(store.vector(i), store.vector(j)).map(f64::from);
    Ok(ScoreSet::new(
        index.genuine.iter().map(s).collect::<Result<_>>()?,
        index.imposter.iter().map(s).collect::<Result<_>>()?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_and_two_impressions() {
        let idx = enumerate_pairs(&[0, 0, 0, 1, 1]).unwrap();
        assert_eq!(idx.genuine.len(), 4);
        assert_eq!(idx.imposter.len(), 6);
        assert_eq!(pair_counts(&[3, 2]), (4, 6));
    }

    #[test]
    fn degenerate_inputs_are_protocol_errors() {
        assert!(matches!(enumerate_pairs(&[4, 4, 4]), Err(Error::Protocol(_))));
        assert!(matches!(enumerate_pairs(&[1, 2, 3]), Err(Error::Protocol(_))));
    }
}
