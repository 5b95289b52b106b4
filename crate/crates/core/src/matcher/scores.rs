use serde::{Deserialize, Serialize};

use super::fusion::{fuse_scores, FusionWeights};
use crate::error::{Error, Result};

/// Genuine and imposter comparison scores of one matcher.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub genuine: Vec<f64>,
    pub imposter: Vec<f64>,
}

impl ScoreSet {
    pub fn new(genuine: Vec<f64>, imposter: Vec<f64>) -> Self {
        Self { genuine, imposter }
    }

    /// Both lists must be non-empty and every score finite and in `[-1, 1]`
    /// (up to `f32` rounding).
    pub fn validate(&self) -> Result<()> {
        if self.genuine.is_empty() || self.imposter.is_empty() {
            return Err(Error::Validation(format!(
                "score set needs genuine and imposter scores, has {} and {}",
                self.genuine.len(),
                self.imposter.len()
            )));
        }
        let bound = 1.0 + 1e-5;
        if let Some(s) = self
            .genuine
            .iter()
            .chain(&self.imposter)
            .find(|s| !(s.abs() <= bound))
        {
            return Err(Error::Validation(format!("score {s} outside [-1, 1]")));
        }
        Ok(())
    }

    /// Fuse with another matcher's scores over the same pair enumeration.
    /// With `normalize`, each matcher is min-max normalized over all of its
    /// scores before weighting.
    pub fn fuse(&self, other: &ScoreSet, weights: FusionWeights, normalize: bool) -> Result<ScoreSet> {
        if self.genuine.len() != other.genuine.len() || self.imposter.len() != other.imposter.len() {
            return Err(Error::Shape("score sets come from different pair enumerations".into()));
        }
        let a: Vec<f64> = self.genuine.iter().chain(&self.imposter).copied().collect();
        let b: Vec<f64> = other.genuine.iter().chain(&other.imposter).copied().collect();
        let mut fused = fuse_scores(&a, &b, weights, normalize)?;
        let imposter = fused.split_off(self.genuine.len());
        Ok(ScoreSet::new(fused, imposter))
    }
}
