use std::collections::BTreeMap;

use fpvit::synthdata::{
    aligned_overlap, generate_corpus, generate_dataset, read_manifest, render_impression, IdentityTemplate,
    ImpressionParams, SynthConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DIST: f64 = 6.0;
const ANGLE: f64 = 20.0;

#[test]
fn mated_overlap_exceeds_non_mated() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let params = ImpressionParams::default();
    let mut wins = 0;
    for trial in 0..100u32 {
        let (a, b) = (rng.gen_range(0..1000u64), rng.gen_range(1000..2000u64));
        let ta = IdentityTemplate::generate(4, a, 224).unwrap();
        let tb = IdentityTemplate::generate(4, b, 224).unwrap();
        let i0 = render_impression(&ta, 2 * trial, &params, 4).unwrap();
        let i1 = render_impression(&ta, 2 * trial + 1, &params, 4).unwrap();
        let j = render_impression(&tb, trial, &params, 4).unwrap();
        let mated = aligned_overlap(&i0.minutiae, &i1.minutiae, DIST, ANGLE);
        let non_mated = aligned_overlap(&i0.minutiae, &j.minutiae, DIST, ANGLE);
        wins += usize::from(mated > non_mated);
    }
    assert_eq!(wins, 100, "mated overlap won {wins}/100 trials");
}

#[test]
fn overlap_classifier_separates_identities() {
    let corpus = generate_corpus(&SynthConfig::default(), 20, 10, 8).unwrap();
    let mut correct = 0;
    for (i, probe) in corpus.iter().enumerate() {
        let best = corpus
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .max_by_key(|(j, g)| (aligned_overlap(&probe.minutiae, &g.minutiae, DIST, ANGLE), usize::MAX - j))
            .unwrap()
            .1;
        correct += usize::from(best.identity == probe.identity);
    }
    let rank1 = correct as f64 / corpus.len() as f64;
    println!("overlap rank-1 on 20 identities: {rank1:.3}");
    assert!(rank1 >= 0.9);
}

#[test]
fn dataset_files_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let config = SynthConfig { side: 96, ..SynthConfig::default() };
    let entries = generate_dataset(&config, 5, 4, 7, dir.path()).unwrap();
    assert_eq!(entries.len(), 20);
    assert_eq!(read_manifest(dir.path()).unwrap(), entries);
    let mut hist = BTreeMap::new();
    for e in &entries {
        *hist.entry(e.identity).or_insert(0) += 1;
        assert!(dir.path().join(&e.image_path).is_file());
        assert!(dir.path().join(&e.minutiae_path).is_file());
    }
    assert!(hist.values().all(|&n| n == 4));

    let again = tempfile::tempdir().unwrap();
    generate_dataset(&config, 5, 4, 7, again.path()).unwrap();
    for e in &entries {
        for p in [&e.image_path, &e.minutiae_path] {
            assert_eq!(std::fs::read(dir.path().join(p)).unwrap(), std::fs::read(again.path().join(p)).unwrap());
        }
    }
}
