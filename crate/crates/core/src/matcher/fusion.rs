//! Weighted score-level fusion of two matchers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weights of the first and second matcher; non-negative, summing to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    w1: f64,
    w2: f64,
}

impl FusionWeights {
    /// Weights `(0.7, 0.3)` used for the reported fusion results.
    pub const DEFAULT: FusionWeights = FusionWeights { w1: 0.7, w2: 0.3 };

    pub fn new(w1: f64, w2: f64) -> Result<Self> {
        if !(w1 >= 0.0 && w2 >= 0.0) || (w1 + w2 - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "fusion weights must be non-negative and sum to 1, got ({w1}, {w2})"
            )));
        }
        Ok(Self { w1, w2 })
    }

    /// Parse `"w1,w2"`.
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(',').map(str::trim).collect();
        let [a, b] = parts.as_slice() else {
            return Err(Error::Config(format!("expected `w1,w2`, got {text:?}")));
        };
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::Config(format!("invalid fusion weight {s:?}")))
        };
        Self::new(num(a)?, num(b)?)
    }

    pub fn w1(&self) -> f64 {
        self.w1
    }

    pub fn w2(&self) -> f64 {
        self.w2
    }
}

/// `w1 * s1 + w2 * s2`.
#[inline]
pub fn fuse(s1: f64, s2: f64, weights: FusionWeights) -> f64 {
    weights.w1 * s1 + weights.w2 * s2
}

/// Min-max normalization to `[0, 1]`; a constant list maps to zeros.
pub fn min_max_normalize(scores: &[f64]) -> Vec<f64> {
    let (lo, hi) = scores
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    let span = hi - lo;
    scores
        .iter()
        .map(|&s| if span > 0.0 { (s - lo) / span } else { 0.0 })
        .collect()
}

/// Element-wise fusion of two aligned score lists. With `normalize`, each
/// source is min-max normalized over its own list first.
pub fn fuse_scores(first: &[f64], second: &[f64], weights: FusionWeights, normalize: bool) -> Result<Vec<f64>> {
    if first.len() != second.len() {
        return Err(Error::Shape(format!(
            "cannot fuse {} scores with {} scores",
            first.len(),
            second.len()
        )));
    }
    let (a, b) = if normalize {
        (min_max_normalize(first), min_max_normalize(second))
    } else {
        (first.to_vec(), second.to_vec())
    };
    Ok(a.iter().zip(&b).map(|(&x, &y)| fuse(x, y, weights)).collect())
}
