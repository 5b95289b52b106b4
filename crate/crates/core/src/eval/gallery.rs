//! Closed- and open-set gallery construction.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Protocol;
use crate::error::{Error, Result};
use crate::matcher::RecordId;

/// One finger and the impression ids available for it.
#[derive(Debug, Clone, PartialEq)]
pub struct Identity {
    pub subject_id: u64,
    pub impressions: Vec<u32>,
}

impl Identity {
    pub fn new(subject_id: u64, impressions: Vec<u32>) -> Self {
        Self { subject_id, impressions }
    }

    /// Identity with impressions `0..count`.
    pub fn with_count(subject_id: u64, count: u32) -> Self {
        Self::new(subject_id, (0..count).collect())
    }
}

/// Record ids making up the search galleries and probe sets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GalleryPlan {
    pub closed_gallery: Vec<RecordId>,
    /// Closed gallery minus the enrollments of the unmated subjects.
    pub open_gallery: Vec<RecordId>,
    /// Every non-enrolled impression of every test identity.
    pub probes: Vec<RecordId>,
    /// Test subjects still enrolled in the open gallery.
    pub mated_subjects: Vec<u64>,
    /// Test subjects removed from the open gallery.
    pub unmated_subjects: Vec<u64>,
}

impl GalleryPlan {
    pub fn mated_probes(&self) -> impl Iterator<Item = RecordId> + '_ {
        self.probes.iter().copied().filter(|p| self.mated_subjects.contains(&p.subject_id))
    }

    pub fn unmated_probes(&self) -> impl Iterator<Item = RecordId> + '_ {
        self.probes.iter().copied().filter(|p| self.unmated_subjects.contains(&p.subject_id))
    }
}

fn enroll(identity: &Identity, count: usize, rng: &mut ChaCha8Rng) -> (Vec<u32>, Vec<u32>) {
    let mut imps = identity.impressions.clone();
    imps.sort_unstable();
    imps.shuffle(rng);
    let mut enrolled = imps[..count].to_vec();
    let mut rest = imps[count..].to_vec();
    enrolled.sort_unstable();
    rest.sort_unstable();
    (enrolled, rest)
}

/// Enroll `enroll_impressions_per_finger` seeded impressions of every test and
/// distractor identity; the rest of the test impressions become probes.
/// `round(unmated_fraction · tests)` test subjects (seeded) are dropped from
/// the open gallery.
pub fn build_galleries(
    tests: &[Identity],
    distractors: &[Identity],
    protocol: &Protocol,
    seed: u64,
) -> Result<GalleryPlan> {
    protocol.validate()?;
    let k = protocol.enroll_impressions_per_finger;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::new();
    for id in tests.iter().chain(distractors) {
        if !seen.insert(id.subject_id) {
            return Err(Error::Protocol(format!("subject {} listed twice", id.subject_id)));
        }
    }
    let mut plan = GalleryPlan::default();
    for d in distractors {
        if d.impressions.len() < k {
            return Err(Error::Protocol(format!(
                "distractor {} has {} impressions, needs {k}",
                d.subject_id,
                d.impressions.len()
            )));
        }
        let (enrolled, _) = enroll(d, k, &mut rng);
        plan.closed_gallery.extend(enrolled.into_iter().map(|i| RecordId::new(d.subject_id, i)));
    }
    let mut enrolled_tests = Vec::with_capacity(tests.len());
    for t in tests {
        if t.impressions.len() < k + 1 {
            return Err(Error::Protocol(format!(
                "test subject {} has {} impressions, needs at least {}",
                t.subject_id,
                t.impressions.len(),
                k + 1
            )));
        }
        let (enrolled, rest) = enroll(t, k, &mut rng);
        plan.closed_gallery.extend(enrolled.iter().map(|&i| RecordId::new(t.subject_id, i)));
        plan.probes.extend(rest.into_iter().map(|i| RecordId::new(t.subject_id, i)));
        enrolled_tests.push(t.subject_id);
    }
    let unmated_count = (protocol.unmated_fraction * tests.len() as f64).round() as usize;
    let mut order = enrolled_tests.clone();
    order.shuffle(&mut rng);
    plan.unmated_subjects = order[..unmated_count].to_vec();
    plan.unmated_subjects.sort_unstable();
    plan.mated_subjects = enrolled_tests
        .into_iter()
        .filter(|s| !plan.unmated_subjects.contains(s))
        .collect();
    plan.open_gallery = plan
        .closed_gallery
        .iter()
        .copied()
        .filter(|r| plan.unmated_subjects.binary_search(&r.subject_id).is_err())
        .collect();
    Ok(plan)
}
