//! Verification metrics: ROC curves, verification rate at a target false
//! acceptance rate, and AUC.
//!
//! A pair is accepted when its score is `>= threshold`, the same convention as
//! [`crate::fusion::decide`].

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Genuine (same-person) and impostor (different-person) pair scores.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreSet {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
}

impl ScoreSet {
    pub fn new(genuine: Vec<f64>, impostor: Vec<f64>) -> Self {
        ScoreSet { genuine, impostor }
    }

    fn validate(&self) -> Result<()> {
        if self.genuine.is_empty() || self.impostor.is_empty() {
            return Err(Error::InsufficientData(format!(
                "need genuine and impostor scores, got {} / {}",
                self.genuine.len(),
                self.impostor.len()
            )));
        }
        if self.genuine.iter().chain(&self.impostor).any(|s| !s.is_finite()) {
            return Err(Error::invalid("non-finite score"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    /// Acceptance threshold; `+inf` for the accept-nothing point.
    pub threshold: f64,
    pub far: f64,
    pub vr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// Ordered by increasing threshold-descent: `far` and `vr` are both
    /// non-decreasing.
    pub points: Vec<RocPoint>,
}

fn sorted_desc(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Sweeps the threshold over `+inf` and every distinct score, from high to low.
pub fn roc(set: &ScoreSet) -> Result<RocCurve> {
    set.validate()?;
    let genuine = sorted_desc(&set.genuine);
    let impostor = sorted_desc(&set.impostor);
    let (ng, ni) = (genuine.len() as f64, impostor.len() as f64);

    let mut thresholds: Vec<f64> = genuine.iter().chain(&impostor).copied().collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();

    let mut points = Vec::with_capacity(thresholds.len() + 1);
    points.push(RocPoint {
        threshold: f64::INFINITY,
        far: 0.0,
        vr: 0.0,
    });
    let (mut g, mut i) = (0usize, 0usize);
    for t in thresholds {
        while g < genuine.len() && genuine[g] >= t {
            g += 1;
        }
        while i < impostor.len() && impostor[i] >= t {
            i += 1;
        }
        points.push(RocPoint {
            threshold: t,
            far: i as f64 / ni,
            vr: g as f64 / ng,
        });
    }
    Ok(RocCurve { points })
}

/// Best verification rate over thresholds whose empirical FAR does not exceed
/// `far_target`.
pub fn vr_at_far(set: &ScoreSet, far_target: f64) -> Result<f64> {
    if !(far_target > 0.0 && far_target <= 1.0) {
        return Err(Error::invalid(format!(
            "FAR target must be in (0, 1], got {far_target}"
        )));
    }
    Ok(vr_at_far_on_curve(&roc(set)?, far_target))
}

pub fn vr_at_far_on_curve(curve: &RocCurve, far_target: f64) -> f64 {
    curve
        .points
        .iter()
        .filter(|p| p.far <= far_target)
        .map(|p| p.vr)
        .fold(0.0, f64::max)
}

/// Trapezoidal area under the `(far, vr)` curve, clipped to `[0, 1]`.
pub fn auc(curve: &RocCurve) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| (w[1].far - w[0].far) * (w[1].vr + w[0].vr) / 2.0)
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

/// FAR targets reported in every summary.
pub const REPORT_FAR_TARGETS: [f64; 2] = [0.001, 0.01];

/// Headline metrics for one score set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub n_genuine: usize,
    pub n_impostor: usize,
    /// `(far_target, vr)` for each of [`REPORT_FAR_TARGETS`].
    pub vr_at: Vec<(f64, f64)>,
    pub auc: f64,
    pub warnings: Vec<String>,
}

impl EvalSummary {
    pub fn vr_at(&self, far_target: f64) -> Option<f64> {
        self.vr_at.iter().find(|(t, _)| *t == far_target).map(|&(_, v)| v)
    }

    /// Plain-text block, one `key: value` per line.
    pub fn render(&self, label: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[{label}]");
        let _ = writeln!(s, "genuine_pairs: {}", self.n_genuine);
        let _ = writeln!(s, "impostor_pairs: {}", self.n_impostor);
        for (t, v) in &self.vr_at {
            let _ = writeln!(s, "vr@{t}: {v:.6}");
        }
        let _ = writeln!(s, "auc: {:.6}", self.auc);
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }
}

/// Warning text when the impostor set is too small to resolve `far_target`.
pub fn granularity_warning(n_impostor: usize, far_target: f64) -> Option<String> {
    ((n_impostor as f64) < 1.0 / far_target).then(|| {
        format!(
            "FAR target {far_target} is unresolvable with {n_impostor} impostor pairs (needs at least {})",
            (1.0 / far_target).ceil() as usize
        )
    })
}

pub fn summarize(set: &ScoreSet) -> Result<EvalSummary> {
    let curve = roc(set)?;
    let vr_at = REPORT_FAR_TARGETS
        .iter()
        .map(|&t| (t, vr_at_far_on_curve(&curve, t)))
        .collect();
    let warnings = REPORT_FAR_TARGETS
        .iter()
        .filter_map(|&t| granularity_warning(set.impostor.len(), t))
        .collect();
    Ok(EvalSummary {
        n_genuine: set.genuine.len(),
        n_impostor: set.impostor.len(),
        vr_at,
        auc: auc(&curve),
        warnings,
    })
}

/// ROC as CSV with header `far,vr`.
pub fn roc_csv(curve: &RocCurve) -> String {
    let mut s = String::from("far,vr\n");
    for p in &curve.points {
        let _ = writeln!(s, "{},{}", p.far, p.vr);
    }
    s
}
