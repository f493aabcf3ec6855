//! Log-likelihood-ratio score fusion.
//!
//! Under each hypothesis (same person / different persons) the classifier
//! scores are modeled as independent Gaussians. The fused score is
//!
//! ```text
//! S = Σᵢ log N(sᵢ; m_same,i, σ²_same,i) − log N(sᵢ; m_diff,i, σ²_diff,i)
//! ```
//!
//! computed entirely in log space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample variances below this are raised to it.
pub const VARIANCE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mean: f64,
    pub var: f64,
}

impl GaussianParams {
    pub fn new(mean: f64, var: f64) -> Result<Self> {
        if !(mean.is_finite() && var > 0.0 && var.is_finite()) {
            return Err(Error::invalid(format!("invalid Gaussian mean {mean} / variance {var}")));
        }
        Ok(GaussianParams { mean, var })
    }

    /// Sample mean and divisor-(k-1) variance, floored at [`VARIANCE_FLOOR`].
    pub fn estimate(samples: &[f64]) -> Result<Self> {
        let k = samples.len();
        if k < 2 {
            return Err(Error::InsufficientData(format!("need at least 2 scores, got {k}")));
        }
        let mean = samples.iter().sum::<f64>() / k as f64;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
        GaussianParams::new(mean, var.max(VARIANCE_FLOOR))
    }
}

/// Score models of one classifier under both hypotheses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierParams {
    pub same: GaussianParams,
    pub diff: GaussianParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionModel {
    pub classifiers: Vec<ClassifierParams>,
}

impl FusionModel {
    pub fn new(classifiers: Vec<ClassifierParams>) -> Result<Self> {
        if classifiers.is_empty() {
            return Err(Error::invalid("fusion model needs at least one classifier"));
        }
        for c in &classifiers {
            GaussianParams::new(c.same.mean, c.same.var)?;
            GaussianParams::new(c.diff.mean, c.diff.var)?;
        }
        Ok(FusionModel { classifiers })
    }

    pub fn n_classifiers(&self) -> usize {
        self.classifiers.len()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: FusionModel = serde_json::from_str(s)?;
        FusionModel::new(raw.classifiers)
    }

    /// Same model with the two hypotheses exchanged.
    pub fn swapped(&self) -> FusionModel {
        FusionModel {
            classifiers: self
                .classifiers
                .iter()
                .map(|c| ClassifierParams {
                    same: c.diff,
                    diff: c.same,
                })
                .collect(),
        }
    }
}

fn column_count<R: AsRef<[f64]>>(rows: &[R], what: &str) -> Result<usize> {
    if rows.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 {what} score rows, got {}",
            rows.len()
        )));
    }
    let n = rows[0].as_ref().len();
    if n == 0 {
        return Err(Error::invalid("score rows are empty"));
    }
    if let Some(bad) = rows.iter().find(|r| r.as_ref().len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: bad.as_ref().len(),
        });
    }
    Ok(n)
}

/// Fits per-classifier Gaussians from training score rows (one row per pair,
/// one column per classifier).
pub fn fit_fusion<R: AsRef<[f64]>>(same_scores: &[R], diff_scores: &[R]) -> Result<FusionModel> {
    let n = column_count(same_scores, "same-person")?;
    let n_diff = column_count(diff_scores, "different-person")?;
    if n != n_diff {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: n_diff,
        });
    }
    let column = |rows: &[R], i: usize| -> Vec<f64> { rows.iter().map(|r| r.as_ref()[i]).collect() };
    let classifiers = (0..n)
        .map(|i| {
            Ok(ClassifierParams {
                same: GaussianParams::estimate(&column(same_scores, i))?,
                diff: GaussianParams::estimate(&column(diff_scores, i))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    FusionModel::new(classifiers)
}

/// `log N(s; mean, var)`.
pub fn log_gaussian(s: f64, p: &GaussianParams) -> f64 {
    let d = s - p.mean;
    -0.5 * (2.0 * std::f64::consts::PI * p.var).ln() - d * d / (2.0 * p.var)
}

/// The fused log-likelihood ratio of a score vector.
pub fn fuse(model: &FusionModel, scores: &[f64]) -> Result<f64> {
    if scores.len() != model.n_classifiers() {
        return Err(Error::DimensionMismatch {
            expected: model.n_classifiers(),
            found: scores.len(),
        });
    }
    Ok(model
        .classifiers
        .iter()
        .zip(scores)
        .map(|(c, &s)| log_gaussian(s, &c.same) - log_gaussian(s, &c.diff))
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    /// Same person (H1).
    Accept,
    /// Different persons (H0).
    Reject,
}

impl std::fmt::Display for Decision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Decision::Accept => "ACCEPT",
            Decision::Reject => "REJECT",
        })
    }
}

/// Accepts iff `fused >= threshold`; ties accept. The Bayes comparator is
/// `threshold = 0`.
pub fn decide(fused: f64, threshold: f64) -> Decision {
    if fused >= threshold {
        Decision::Accept
    } else {
        Decision::Reject
    }
}
