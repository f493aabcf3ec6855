//! End-to-end verification pipeline: preprocessing, feature extraction, one
//! kernel PCA subspace per descriptor, and score fusion.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, StageContext};
use crate::features::{feature_sets, BandEdges, Descriptor, FeatureVector};
use crate::fusion::{decide, fit_fusion, fuse, Decision, FusionModel};
use crate::imaging::Image;
use crate::linalg::Matrix;
use crate::preprocess::{preprocess_chain, PreprocessConfig};
use crate::subspace::{cosine_score, fit_kpca, project, KernelConfig, SubspaceModel};

/// Everything needed to turn images into fused verification scores.
///
/// Preprocessing fields are flattened, so the JSON form is a single flat
/// object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    #[serde(flatten)]
    pub preprocess: PreprocessConfig,
    pub feature_selection: Vec<Descriptor>,
    pub band_edges: BandEdges,
    pub kernel: KernelConfig,
    /// Upper bound on retained components per subspace; clamped to the
    /// training set size.
    pub n_components: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            preprocess: PreprocessConfig::default(),
            feature_selection: Descriptor::default_selection(),
            band_edges: BandEdges::default(),
            kernel: KernelConfig::default(),
            n_components: 64,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.preprocess.validate()?;
        self.band_edges.validate()?;
        if self.feature_selection.is_empty() {
            return Err(Error::invalid("feature_selection is empty"));
        }
        for (i, d) in self.feature_selection.iter().enumerate() {
            if self.feature_selection[..i].contains(d) {
                return Err(Error::invalid(format!("duplicate feature descriptor {d}")));
            }
        }
        if self.n_components == 0 {
            return Err(Error::invalid("n_components must be at least 1"));
        }
        if let KernelConfig::Rbf { gamma: Some(g) } = self.kernel {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::invalid(format!("rbf gamma must be positive, got {g}")));
            }
        }
        if let KernelConfig::Polynomial { degree, offset } = self.kernel {
            if degree == 0 || !(offset >= 0.0 && offset.is_finite()) {
                return Err(Error::invalid(format!(
                    "polynomial kernel needs degree >= 1 and offset >= 0, got {degree} / {offset}"
                )));
            }
        }
        Ok(())
    }
}

/// Preprocesses `img` and extracts the configured feature vectors.
pub fn extract(img: &Image, cfg: &PipelineConfig) -> Result<Vec<FeatureVector>> {
    let pre = preprocess_chain(img, &cfg.preprocess).stage("preprocess")?;
    feature_sets(&pre, &cfg.feature_selection, &cfg.band_edges).stage("features")
}

/// An unordered pair of samples `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pair {
    pub a: usize,
    pub b: usize,
    pub genuine: bool,
}

/// Every unordered pair, in lexicographic `(a, b)` order.
pub fn all_pairs<L: PartialEq>(labels: &[L]) -> Vec<Pair> {
    let n = labels.len();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for a in 0..n {
        for b in a + 1..n {
            out.push(Pair {
                a,
                b,
                genuine: labels[a] == labels[b],
            });
        }
    }
    out
}

fn distinct_count<L: PartialEq>(labels: &[L]) -> usize {
    let mut seen: Vec<&L> = Vec::new();
    for l in labels {
        if !seen.contains(&l) {
            seen.push(l);
        }
    }
    seen.len()
}

/// Fitted subspaces (one per descriptor, in selection order) plus the fusion
/// model over their cosine scores.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPipeline {
    pub descriptors: Vec<Descriptor>,
    pub models: Vec<SubspaceModel>,
    pub fusion: FusionModel,
}

/// Projections of one sample, one vector per subspace.
pub type Projections = Vec<Vec<f64>>;

/// Per-classifier cosine scores of every pair, keyed like the pair list.
#[derive(Debug, Clone, PartialEq)]
pub struct PairScores {
    pub pairs: Vec<Pair>,
    pub scores: Vec<Vec<f64>>,
}

impl TrainedPipeline {
    pub fn n_classifiers(&self) -> usize {
        self.models.len()
    }

    pub fn project(&self, features: &[FeatureVector]) -> Result<Projections> {
        if features.len() != self.models.len() {
            return Err(Error::DimensionMismatch {
                expected: self.models.len(),
                found: features.len(),
            });
        }
        self.descriptors
            .iter()
            .zip(&self.models)
            .zip(features)
            .map(|((d, m), f)| {
                if f.descriptor != *d {
                    return Err(Error::invalid(format!("expected {d} features, got {}", f.descriptor)));
                }
                project(m, &f.values)
            })
            .collect()
    }

    pub fn project_all(&self, samples: &[Vec<FeatureVector>]) -> Result<Vec<Projections>> {
        samples.par_iter().map(|f| self.project(f)).collect()
    }

    /// Per-classifier cosine scores of two projected samples.
    pub fn classifier_scores(&self, a: &Projections, b: &Projections) -> Result<Vec<f64>> {
        a.iter().zip(b).map(|(u, v)| cosine_score(u, v)).collect()
    }

    pub fn fused_score(&self, scores: &[f64]) -> Result<f64> {
        fuse(&self.fusion, scores)
    }

    /// Scores one probe / gallery pair end to end from feature vectors.
    pub fn verify(&self, probe: &[FeatureVector], gallery: &[FeatureVector], threshold: f64) -> Result<Verification> {
        let scores = self.classifier_scores(&self.project(probe)?, &self.project(gallery)?)?;
        let fused = self.fused_score(&scores)?;
        Ok(Verification {
            decision: decide(fused, threshold),
            scores,
            fused,
        })
    }

    /// Scores every pair among `projections`.
    pub fn score_pairs<L: PartialEq + Sync>(&self, projections: &[Projections], labels: &[L]) -> Result<PairScores> {
        if projections.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: labels.len(),
                found: projections.len(),
            });
        }
        let pairs = all_pairs(labels);
        let scores = pairs
            .par_iter()
            .map(|p| self.classifier_scores(&projections[p.a], &projections[p.b]))
            .collect::<Result<Vec<_>>>()?;
        Ok(PairScores { pairs, scores })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verification {
    pub scores: Vec<f64>,
    pub fused: f64,
    pub decision: Decision,
}

/// Fits one subspace per descriptor on `samples` (feature sets in selection
/// order), then fits the fusion model on the cosine scores of all training
/// pairs.
pub fn train<L: PartialEq + Sync>(
    samples: &[Vec<FeatureVector>],
    labels: &[L],
    cfg: &PipelineConfig,
) -> Result<TrainedPipeline> {
    cfg.validate()?;
    if samples.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            found: samples.len(),
        });
    }
    if distinct_count(labels) < 2 {
        return Err(Error::InsufficientData("need ≥ 2 identities for impostor pairs".into()));
    }
    let n = samples.len();
    let descriptors = cfg.feature_selection.clone();
    for s in samples {
        if s.len() != descriptors.len() || s.iter().zip(&descriptors).any(|(f, d)| f.descriptor != *d) {
            return Err(Error::invalid(
                "training sample feature sets do not match feature_selection",
            ));
        }
    }
    let n_components = cfg.n_components.min(n);

    let models = (0..descriptors.len())
        .into_par_iter()
        .map(|k| {
            let rows: Vec<&[f64]> = samples.iter().map(|s| s[k].values.as_slice()).collect();
            let x = Matrix::from_rows(&rows)?;
            let spec = cfg.kernel.resolve(x.cols());
            fit_kpca(&x, spec, n_components)
        })
        .collect::<Result<Vec<_>>>()
        .stage("subspace")?;

    let mut trained = TrainedPipeline {
        descriptors,
        models,
        fusion: FusionModel {
            classifiers: Vec::new(),
        },
    };
    let projections = trained.project_all(samples).stage("subspace")?;
    let scored = trained.score_pairs(&projections, labels).stage("scoring")?;
    let (mut same, mut diff) = (Vec::new(), Vec::new());
    for (p, s) in scored.pairs.iter().zip(scored.scores) {
        if p.genuine {
            same.push(s);
        } else {
            diff.push(s);
        }
    }
    trained.fusion = fit_fusion(&same, &diff).stage("fusion")?;
    Ok(trained)
}
