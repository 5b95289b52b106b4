use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CmcPoint, DetPoint, TarPoint};
use crate::error::{Error, Result};

/// Mean and sample standard deviation (n−1 denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// A scalar metric tracked across folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub metric: String,
    pub per_fold: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl FoldSummary {
    pub fn new(metric: impl Into<String>, per_fold: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&per_fold);
        Self { metric: metric.into(), per_fold, mean, std }
    }
}

/// Evaluation results for one matcher.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub name: String,
    pub tar_at_far: Vec<TarPoint>,
    pub cmc: Vec<CmcPoint>,
    pub det_open: Vec<DetPoint>,
    pub folds: Vec<FoldSummary>,
}

impl EvalReport {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), ..Self::default() }
    }

    /// Checks the monotonicity and range invariants of every curve.
    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        let mut tar = self.tar_at_far.clone();
        tar.sort_by(|a, b| a.far_target.total_cmp(&b.far_target));
        let ok = tar.iter().all(|p| in_unit(p.tar) && in_unit(p.far))
            && tar.windows(2).all(|w| w[0].tar <= w[1].tar)
            && self.cmc.iter().all(|p| in_unit(p.hit_rate))
            && self.cmc.windows(2).all(|w| w[0].rank < w[1].rank && w[0].hit_rate <= w[1].hit_rate)
            && self.det_open.iter().all(|p| in_unit(p.fpir) && in_unit(p.fnir));
        if ok {
            Ok(())
        } else {
            Err(Error::Numerical(format!("report '{}' violates metric invariants", self.name)))
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("report JSON: {e}")))
    }

    pub fn tar_csv(&self) -> String {
        let mut s = String::from("far,tar\n");
        for p in &self.tar_at_far {
            let _ = writeln!(s, "{},{}", p.far_target, p.tar);
        }
        s
    }

    pub fn cmc_csv(&self) -> String {
        let mut s = String::from("rank,hit_rate\n");
        for p in &self.cmc {
            let _ = writeln!(s, "{},{}", p.rank, p.hit_rate);
        }
        s
    }

    pub fn det_csv(&self) -> String {
        let mut s = String::from("threshold,fpir,fnir\n");
        for p in &self.det_open {
            let _ = writeln!(s, "{},{},{}", p.threshold, p.fpir, p.fnir);
        }
        s
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}
