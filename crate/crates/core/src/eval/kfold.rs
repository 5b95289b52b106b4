use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identity partition for one cross-validation fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold: usize,
    pub train: Vec<u64>,
    pub val: Vec<u64>,
    pub test: Vec<u64>,
}

/// Identity-disjoint k-fold split.
///
/// Identities are shuffled under `seed` and cut into `folds` contiguous test
/// folds whose sizes differ by at most one. For each fold, the first
/// `val_size` non-test identities following the test fold (cyclically in
/// shuffled order) form the validation set; the remainder trains.
pub fn kfold_split(identities: &[u64], folds: usize, val_size: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    let n = identities.len();
    if folds < 2 && n > 1 {
        return Err(Error::Protocol(format!("need at least 2 folds, got {folds}")));
    }
    if folds > n {
        return Err(Error::Protocol(format!("{folds} folds requested for {n} identities")));
    }
    let mut ids = identities.to_vec();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Protocol("duplicate identity in split input".into()));
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let bounds: Vec<usize> = (0..=folds).map(|f| f * n / folds).collect();
    (0..folds)
        .map(|f| {
            let (lo, hi) = (bounds[f], bounds[f + 1]);
            let rest: Vec<u64> = ids[hi..].iter().chain(&ids[..lo]).copied().collect();
            if val_size > rest.len() {
                return Err(Error::Protocol(format!(
                    "validation size {val_size} exceeds {} non-test identities",
                    rest.len()
                )));
            }
            let mut val = rest[..val_size].to_vec();
            let mut train = rest[val_size..].to_vec();
            let mut test = ids[lo..hi].to_vec();
            val.sort_unstable();
            train.sort_unstable();
            test.sort_unstable();
            Ok(FoldSplit { fold: f, train, val, test })
        })
        .collect()
}
