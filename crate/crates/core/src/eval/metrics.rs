//! TAR@FAR, closed-set CMC and open-set FPIR/FNIR.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcher::{score_all, EmbeddingStore, ScoreSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TarPoint {
    pub far_target: f64,
    pub tar: f64,
    pub threshold: f64,
    /// Imposter acceptance rate actually achieved at `threshold`.
    pub far: f64,
    /// The target is finer than one imposter score; the threshold sits
    /// just above the largest imposter score.
    pub resolution_limited: bool,
}

/// True accept rate at each false accept target.
///
/// The threshold is the smallest value `t` with
/// `|{imposter ≥ t}| / |imposter| ≤ target`: with `k = ⌊target·N⌋`
/// admissible imposters it is the next representable value above the
/// `(k+1)`-th largest imposter score. TAR counts genuine scores `≥ t`.
pub fn tar_at_far(scores: &ScoreSet, far_targets: &[f64]) -> Result<Vec<TarPoint>> {
    scores.validate()?;
    let mut imposter = scores.imposter.clone();
    imposter.sort_by(|a, b| b.total_cmp(a));
    let mut genuine = scores.genuine.clone();
    genuine.sort_by(|a, b| b.total_cmp(a));
    let n = imposter.len();
    far_targets
        .iter()
        .map(|&target| {
            if !(target > 0.0 && target < 1.0) {
                return Err(Error::Config(format!("FAR target {target} outside (0, 1)")));
            }
            let k = ((target * n as f64) + 1e-9).floor() as usize;
            let k = k.min(n - 1);
            let threshold = imposter[k].next_up();
            let accepted = |sorted: &[f64]| sorted.partition_point(|&s| s >= threshold);
            Ok(TarPoint {
                far_target: target,
                tar: accepted(&genuine) as f64 / genuine.len() as f64,
                threshold,
                far: accepted(&imposter) as f64 / n as f64,
                resolution_limited: k == 0 && target < 1.0 / n as f64,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmcPoint {
    pub rank: usize,
    pub hit_rate: f64,
}

/// Per-subject maximum score of one probe row against gallery records.
fn subject_scores(row: &[f64], gallery_subjects: &[u64]) -> Vec<(u64, f64)> {
    let mut best: HashMap<u64, f64> = HashMap::new();
    for (&s, &v) in gallery_subjects.iter().zip(row) {
        best.entry(s).and_modify(|b| *b = b.max(v)).or_insert(v);
    }
    let mut out: Vec<(u64, f64)> = best.into_iter().collect();
    // best first; equal scores rank the smaller subject id first
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    out
}

/// Rank (1-based) of the true subject for each probe, from a score table
/// of probes (rows) against gallery records (columns).
pub fn true_subject_ranks(probe_subjects: &[u64], gallery_subjects: &[u64], scores: &[Vec<f64>]) -> Result<Vec<usize>> {
    probe_subjects
        .iter()
        .zip(scores)
        .map(|(&truth, row)| {
            let ranked = subject_scores(row, gallery_subjects);
            ranked
                .iter()
                .position(|&(s, _)| s == truth)
                .map(|p| p + 1)
                .ok_or_else(|| {
                    Error::Protocol(format!("probe subject {truth} has no gallery enrollment (closed-set violated)"))
                })
        })
        .collect()
}

/// CMC curve for ranks `1..=max_rank` from a probe-by-record score table.
pub fn cmc_from_scores(
    probe_subjects: &[u64],
    gallery_subjects: &[u64],
    scores: &[Vec<f64>],
    max_rank: usize,
) -> Result<Vec<CmcPoint>> {
    if probe_subjects.is_empty() {
        return Err(Error::Protocol("closed-set evaluation needs at least one probe".into()));
    }
    let ranks = true_subject_ranks(probe_subjects, gallery_subjects, scores)?;
    let n = ranks.len() as f64;
    Ok((1..=max_rank)
        .map(|r| CmcPoint {
            rank: r,
            hit_rate: ranks.iter().filter(|&&k| k <= r).count() as f64 / n,
        })
        .collect())
}

fn score_table(gallery: &EmbeddingStore, probes: &[(u64, Vec<f32>)]) -> Result<Vec<Vec<f64>>> {
    probes
        .iter()
        .map(|(_, v)| Ok(score_all(gallery, v)?.into_iter().map(f64::from).collect()))
        .collect()
}

/// Closed-set identification: every probe's subject is enrolled.
pub fn closed_set_search_eval(
    gallery: &EmbeddingStore,
    probes: &[(u64, Vec<f32>)],
    max_rank: usize,
) -> Result<Vec<CmcPoint>> {
    let gallery_subjects: Vec<u64> = gallery.ids().iter().map(|id| id.subject_id).collect();
    let probe_subjects: Vec<u64> = probes.iter().map(|(s, _)| *s).collect();
    cmc_from_scores(&probe_subjects, &gallery_subjects, &score_table(gallery, probes)?, max_rank)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetPoint {
    pub threshold: f64,
    pub fpir: f64,
    pub fnir: f64,
}

/// Top-1 `(subject, score)` of each probe row.
fn top1(rows: &[Vec<f64>], gallery_subjects: &[u64]) -> Vec<(u64, f64)> {
    rows.iter()
        .map(|row| subject_scores(row, gallery_subjects)[0])
        .collect()
}

/// Open-set FPIR/FNIR at each threshold from score tables.
///
/// FPIR(t): share of unmated probes whose top-1 score is `≥ t`.
/// FNIR(t): share of mated probes whose top-1 score is `< t` or whose
/// top-1 subject is wrong.
pub fn det_from_scores(
    mated_subjects: &[u64],
    mated_scores: &[Vec<f64>],
    unmated_subjects: &[u64],
    unmated_scores: &[Vec<f64>],
    gallery_subjects: &[u64],
    thresholds: &[f64],
) -> Result<Vec<DetPoint>> {
    if mated_subjects.is_empty() || unmated_subjects.is_empty() {
        return Err(Error::Protocol("open-set evaluation needs mated and unmated probes".into()));
    }
    if gallery_subjects.is_empty() {
        return Err(Error::Empty("open-set gallery is empty".into()));
    }
    for s in unmated_subjects {
        if gallery_subjects.contains(s) {
            return Err(Error::Protocol(format!("unmated probe subject {s} is enrolled in the gallery")));
        }
    }
    let mated = top1(mated_scores, gallery_subjects);
    let unmated = top1(unmated_scores, gallery_subjects);
    let (nm, nu) = (mated.len() as f64, unmated.len() as f64);
    Ok(thresholds
        .iter()
        .map(|&t| DetPoint {
            threshold: t,
            fpir: unmated.iter().filter(|&&(_, s)| s >= t).count() as f64 / nu,
            fnir: mated
                .iter()
                .zip(mated_subjects)
                .filter(|(&(top, s), &truth)| s < t || top != truth)
                .count() as f64
                / nm,
        })
        .collect())
}

/// Every distinct top-1 score of the probes, ascending; a natural
/// threshold sweep for [`det_from_scores`].
pub fn threshold_sweep(mated_scores: &[Vec<f64>], unmated_scores: &[Vec<f64>], gallery_subjects: &[u64]) -> Vec<f64> {
    let mut t: Vec<f64> = top1(mated_scores, gallery_subjects)
        .into_iter()
        .chain(top1(unmated_scores, gallery_subjects))
        .map(|(_, s)| s)
        .collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    t
}

/// Open-set identification against `gallery`. Without explicit thresholds
/// the sweep of all top-1 scores is used.
pub fn open_set_search_eval(
    gallery: &EmbeddingStore,
    mated: &[(u64, Vec<f32>)],
    unmated: &[(u64, Vec<f32>)],
    thresholds: Option<&[f64]>,
) -> Result<Vec<DetPoint>> {
    let gallery_subjects: Vec<u64> = gallery.ids().iter().map(|id| id.subject_id).collect();
    let ms = score_table(gallery, mated)?;
    let us = score_table(gallery, unmated)?;
    let sweep;
    let thresholds = match thresholds {
        Some(t) => t,
        None => {
            sweep = threshold_sweep(&ms, &us, &gallery_subjects);
            &sweep
        }
    };
    let m_subj: Vec<u64> = mated.iter().map(|(s, _)| *s).collect();
    let u_subj: Vec<u64> = unmated.iter().map(|(s, _)| *s).collect();
    det_from_scores(&m_subj, &ms, &u_subj, &us, &gallery_subjects, thresholds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_enumerated_tar() {
        let s = ScoreSet::new(
            vec![0.9, 0.55, 0.45],
            vec![0.6, 0.5, 0.4, 0.3, 0.2, 0.1, 0.05, 0.04, 0.03, 0.02],
        );
        let p = &tar_at_far(&s, &[0.1]).unwrap()[0];
        assert!((p.tar - 2.0 / 3.0).abs() < 1e-12);
        assert!((p.far - 0.1).abs() < 1e-12);
        assert!(p.threshold > 0.5 && p.threshold < 0.5 + 1e-12);
        assert!(!p.resolution_limited);
    }

    #[test]
    fn separable_and_identical_distributions() {
        let s = ScoreSet::new(vec![0.8, 0.9, 0.95], vec![0.1, 0.2, 0.3, 0.4]);
        for p in tar_at_far(&s, &[0.25, 0.5, 0.75]).unwrap() {
            assert_eq!(p.tar, 1.0);
        }
        let v: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        let s = ScoreSet::new(v.clone(), v);
        for p in tar_at_far(&s, &[0.1, 0.3, 0.6]).unwrap() {
            assert!((p.tar - p.far_target).abs() < 1e-12);
        }
    }

    #[test]
    fn fine_far_target_is_flagged() {
        let s = ScoreSet::new(vec![0.9], vec![0.1, 0.2, 0.3]);
        let p = &tar_at_far(&s, &[0.001]).unwrap()[0];
        assert!(p.resolution_limited);
        assert_eq!(p.far, 0.0);
        assert!(p.threshold > 0.3);
    }

    #[test]
    fn cmc_and_closed_set_violation() {
        let gallery = [1, 1, 2, 3];
        let scores = vec![vec![0.2, 0.9, 0.5, 0.1], vec![0.3, 0.3, 0.1, 0.7]];
        let cmc = cmc_from_scores(&[1, 2], &gallery, &scores, 3).unwrap();
        assert_eq!(cmc.iter().map(|p| p.hit_rate).collect::<Vec<_>>(), vec![0.5, 0.5, 1.0]);
        assert!(matches!(cmc_from_scores(&[9], &gallery, &scores[..1], 3), Err(Error::Protocol(_))));
    }

    #[test]
    fn det_threshold_limits() {
        let gallery = [1, 2, 3];
        let mated = vec![vec![0.9, 0.1, 0.2], vec![0.8, 0.3, 0.1]];
        let unmated = vec![vec![0.4, 0.5, 0.6]];
        let d = det_from_scores(&[1, 2], &mated, &[7], &unmated, &gallery, &[-2.0, 2.0]).unwrap();
        assert_eq!((d[0].fpir, d[0].fnir), (1.0, 0.5));
        assert_eq!((d[1].fpir, d[1].fnir), (0.0, 1.0));
        assert!(matches!(
            det_from_scores(&[1], &mated[..1], &[3], &unmated, &gallery, &[0.0]),
            Err(Error::Protocol(m)) if m.contains('3')
        ));
    }
}
