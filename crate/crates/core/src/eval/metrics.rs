use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataio::LandmarkSet;
use crate::error::{LmptError, Result};
use crate::geometry::dist;
use crate::scalar::Scalar;

/// Landmark name → error in mm.
pub type ErrorMap = BTreeMap<String, f64>;

/// `n` thresholds evenly spaced over `[lo, hi]` inclusive.
pub fn linear_thresholds(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub thresholds: Vec<f64>,
    /// Average PCK per landmark instead of pooling every error.
    pub pck_per_landmark: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { thresholds: linear_thresholds(1.0, 8.0, 10), pck_per_landmark: false }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() {
            return Err(LmptError::Config("at least one PCK threshold is required".into()));
        }
        if self.thresholds.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(LmptError::Config(format!("PCK thresholds must be positive, got {:?}", self.thresholds)));
        }
        if self.thresholds.windows(2).any(|w| w[1] <= w[0]) {
            return Err(LmptError::Config(format!(
                "PCK thresholds must be strictly increasing, got {:?}",
                self.thresholds
            )));
        }
        Ok(())
    }
}

/// Euclidean distance per landmark present in both sets.
pub fn landmark_errors<S: Scalar>(pred: &LandmarkSet<S>, gt: &LandmarkSet<S>) -> Result<ErrorMap> {
    let out: ErrorMap = pred
        .iter()
        .filter_map(|(name, p)| gt.get(name).map(|g| (name.to_string(), dist(p, g).to_f64_lossless())))
        .collect();
    if out.is_empty() {
        return Err(LmptError::EmptyEval);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaeSummary {
    pub per_landmark: BTreeMap<String, f64>,
    pub mean: f64,
}

/// Per-landmark MAE over the samples containing each landmark, and their
/// unweighted mean.
pub fn aggregate_mae(per_sample: &[ErrorMap]) -> Result<MaeSummary> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for errors in per_sample {
        for (name, &e) in errors {
            let slot = acc.entry(name.clone()).or_insert((0.0, 0));
            slot.0 += e;
            slot.1 += 1;
        }
    }
    if acc.is_empty() {
        return Err(LmptError::EmptyEval);
    }
    let per_landmark: BTreeMap<String, f64> = acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect();
    let mean = per_landmark.values().sum::<f64>() / per_landmark.len() as f64;
    Ok(MaeSummary { per_landmark, mean })
}

fn pct_within(errors: &[f64], t: f64) -> f64 {
    100.0 * errors.iter().filter(|&&e| e <= t).count() as f64 / errors.len() as f64
}

/// Percentage of all errors (pooled over samples and landmarks) at or below
/// each threshold.
pub fn pck_curve(per_sample: &[ErrorMap], thresholds: &[f64]) -> Result<Vec<f64>> {
    let errors: Vec<f64> = per_sample.iter().flat_map(|m| m.values().copied()).collect();
    if errors.is_empty() {
        return Err(LmptError::EmptyEval);
    }
    Ok(thresholds.iter().map(|&t| pct_within(&errors, t)).collect())
}

/// PCK computed per landmark, then averaged over landmarks.
pub fn pck_curve_per_landmark(per_sample: &[ErrorMap], thresholds: &[f64]) -> Result<Vec<f64>> {
    let mut by_name: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for m in per_sample {
        for (k, &e) in m {
            by_name.entry(k).or_default().push(e);
        }
    }
    if by_name.is_empty() {
        return Err(LmptError::EmptyEval);
    }
    Ok(thresholds
        .iter()
        .map(|&t| by_name.values().map(|errs| pct_within(errs, t)).sum::<f64>() / by_name.len() as f64)
        .collect())
}
