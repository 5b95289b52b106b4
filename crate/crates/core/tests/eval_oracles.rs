//! Evaluation metrics against brute-force references on random instances.

mod common;

use common::oracles::{naive_det, naive_rank, naive_tar};
use fpvit::eval::{
    cmc_from_scores, count_pairs, det_from_scores, enumerate_pairs, labels_from_counts, pair_counts, tar_at_far,
};
use fpvit::matcher::ScoreSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Scores on a coarse grid so ties are common.
fn grid_score(rng: &mut ChaCha8Rng) -> f64 {
    rng.gen_range(0..20) as f64 / 20.0
}

#[test]
fn tar_matches_naive_threshold_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..30 {
        let g: Vec<f64> = (0..rng.gen_range(1..40)).map(|_| grid_score(&mut rng)).collect();
        let i: Vec<f64> = (0..rng.gen_range(5..60)).map(|_| grid_score(&mut rng)).collect();
        let targets = [0.01, 0.05, 0.1, 0.25, 0.5, 0.9];
        let got = tar_at_far(&ScoreSet::new(g.clone(), i.clone()), &targets).unwrap();
        for (p, &t) in got.iter().zip(&targets) {
            let (thr, tar) = naive_tar(&g, &i, t);
            assert_eq!(p.threshold, thr);
            assert_eq!(p.tar, tar);
        }
        assert!(got.windows(2).all(|w| w[0].tar <= w[1].tar));
    }
}

#[test]
fn cmc_matches_exhaustive_ranking() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..30 {
        let subjects = rng.gen_range(2..8u64);
        let gallery: Vec<u64> = (0..subjects).flat_map(|s| vec![s; rng.gen_range(1..4)]).collect();
        let probes: Vec<u64> = (0..rng.gen_range(1..10)).map(|_| rng.gen_range(0..subjects)).collect();
        let table: Vec<Vec<f64>> = probes
            .iter()
            .map(|_| gallery.iter().map(|_| grid_score(&mut rng)).collect())
            .collect();
        let cmc = cmc_from_scores(&probes, &gallery, &table, subjects as usize).unwrap();
        for p in &cmc {
            let hits = probes
                .iter()
                .zip(&table)
                .filter(|(&t, row)| naive_rank(t, row, &gallery) <= p.rank)
                .count();
            assert_eq!(p.hit_rate, hits as f64 / probes.len() as f64);
        }
        assert_eq!(cmc.last().unwrap().hit_rate, 1.0);
    }
}

#[test]
fn det_matches_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..30 {
        let gallery: Vec<u64> = (0..5u64).flat_map(|s| [s, s]).collect();
        let mated: Vec<u64> = (0..rng.gen_range(1..6)).map(|_| rng.gen_range(0..5)).collect();
        let unmated: Vec<u64> = (0..rng.gen_range(1..6)).map(|i| 100 + i).collect();
        let mut table = |n: usize| -> Vec<Vec<f64>> {
            (0..n).map(|_| gallery.iter().map(|_| grid_score(&mut rng)).collect()).collect()
        };
        let (ms, us) = (table(mated.len()), table(unmated.len()));
        let thresholds = [-1.0, 0.2, 0.5, 0.8, 2.0];
        let det = det_from_scores(&mated, &ms, &unmated, &us, &gallery, &thresholds).unwrap();
        for p in &det {
            assert_eq!((p.fpir, p.fnir), naive_det(&mated, &ms, &us, &gallery, p.threshold));
        }
        assert!(det.windows(2).all(|w| w[0].fpir >= w[1].fpir && w[0].fnir <= w[1].fnir));
    }
}

#[test]
fn pair_partition_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..50 {
        let counts: Vec<u64> = (0..rng.gen_range(2..12)).map(|_| rng.gen_range(1..9)).collect();
        let labels = labels_from_counts(&counts);
        let Ok(idx) = enumerate_pairs(&labels) else { continue };
        let n = labels.len();
        assert_eq!(idx.genuine.len() + idx.imposter.len(), n * (n - 1) / 2);
        assert_eq!(pair_counts(&counts), (idx.genuine.len() as u64, idx.imposter.len() as u64));
    }
}

#[test]
fn first_split_pair_totals() {
    let counts: Vec<u64> = [(37, 12), (150, 13), (11, 14)]
        .iter()
        .flat_map(|&(fingers, n)| std::iter::repeat_n(n, fingers))
        .collect();
    assert_eq!(counts.iter().sum::<u64>(), 2548);
    assert_eq!(pair_counts(&counts), (15_143, 3_229_735));
    assert_eq!(count_pairs(&labels_from_counts(&counts)).unwrap(), (15_143, 3_229_735));
}
