use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Evaluation protocol parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub folds: usize,
    pub enroll_impressions_per_finger: usize,
    pub distractor_identities: usize,
    /// Share of test subjects whose enrollments are withheld in open-set search.
    pub unmated_fraction: f64,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            folds: 5,
            enroll_impressions_per_finger: 2,
            distractor_identities: 0,
            unmated_fraction: 0.5,
        }
    }
}

impl Protocol {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Config(format!("folds must be >= 2, got {}", self.folds)));
        }
        if self.enroll_impressions_per_finger == 0 {
            return Err(Error::Config("enroll_impressions_per_finger must be >= 1".into()));
        }
        if !(self.unmated_fraction > 0.0 && self.unmated_fraction < 1.0) {
            return Err(Error::Config(format!(
                "unmated_fraction must lie in (0, 1), got {}",
                self.unmated_fraction
            )));
        }
        Ok(())
    }
}
