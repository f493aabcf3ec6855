//! Deterministic synthetic verification benchmark.
//!
//! Identities are smooth textures (sums of oriented Gaussian blobs) and each
//! image of an identity is the texture under a multiplicative illumination
//! field plus sensor noise. The benchmark trains the full pipeline on one set
//! of identities and evaluates it, next to a raw-pixel subspace baseline, on a
//! disjoint set.
//!
//! The illumination kinds and their parameters are stand-ins for real lighting
//! variation (indoor / outdoor, day / night); they are not calibrated against
//! any real dataset.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, StageContext};
use crate::eval::{roc, roc_csv, summarize, EvalSummary, RocCurve, ScoreSet};
use crate::features::FeatureVector;
use crate::imaging::Image;
use crate::linalg::Matrix;
use crate::pipeline::{all_pairs, extract, train, Pair, PipelineConfig};
use crate::preprocess::gaussian_smooth;
use crate::rng::{derive_seed, SplitMix64};
use crate::subspace::{cosine_score, fit_kpca, project};

// Keys separating the independent random streams derived from one seed.
const KEY_IDENTITY: u64 = 1;
const KEY_ILLUMINATION: u64 = 2;
const KEY_NOISE: u64 = 3;
const KEY_FIELD: u64 = 4;
const KEY_IMAGE: u64 = 5;
const KEY_POPULATION: u64 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentitySpec {
    pub seed: u64,
    pub n_blobs: usize,
    pub size: usize,
}

impl IdentitySpec {
    pub fn new(seed: u64) -> Self {
        IdentitySpec {
            seed,
            n_blobs: 12,
            size: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.size < 16 {
            return Err(Error::invalid(format!(
                "identity size must be at least 16, got {}",
                self.size
            )));
        }
        if self.n_blobs == 0 {
            return Err(Error::invalid("identity needs at least one blob"));
        }
        Ok(())
    }
}

/// One anisotropic Gaussian blob of an identity texture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blob {
    pub row: usize,
    pub col: usize,
    pub sigma_major: f64,
    pub sigma_minor: f64,
    pub angle: f64,
    pub amplitude: f64,
}

impl Blob {
    fn value(&self, r: f64, c: f64) -> f64 {
        let (dy, dx) = (r - self.row as f64, c - self.col as f64);
        let (s, co) = self.angle.sin_cos();
        let u = co * dx + s * dy;
        let v = -s * dx + co * dy;
        self.amplitude
            * (-0.5 * (u * u / (self.sigma_major * self.sigma_major) + v * v / (self.sigma_minor * self.sigma_minor)))
                .exp()
    }
}

/// Blob parameters of an identity, in draw order.
pub fn identity_blobs(spec: &IdentitySpec) -> Result<Vec<Blob>> {
    spec.validate()?;
    let mut rng = SplitMix64::new(derive_seed(spec.seed, &[KEY_IDENTITY]));
    let n = spec.size as f64;
    Ok((0..spec.n_blobs)
        .map(|_| {
            let row = rng.below(spec.size as u64) as usize;
            let col = rng.below(spec.size as u64) as usize;
            let a = rng.uniform(n / 32.0, n / 8.0);
            let b = rng.uniform(n / 32.0, n / 8.0);
            Blob {
                row,
                col,
                sigma_major: a.max(b),
                sigma_minor: a.min(b),
                angle: rng.uniform(0.0, std::f64::consts::PI),
                amplitude: rng.uniform(0.3, 1.0),
            }
        })
        .collect())
}

/// Renders the identity texture, min-max scaled to `[0.1, 0.9]`.
pub fn generate_identity(spec: &IdentitySpec) -> Result<Image> {
    let blobs = identity_blobs(spec)?;
    let raw = Image::from_fn(spec.size, spec.size, |r, c| {
        blobs.iter().map(|b| b.value(r as f64, c as f64)).sum()
    })?;
    let (lo, hi) = raw.min_max();
    if hi - lo <= 0.0 {
        return Image::filled(spec.size, spec.size, 0.5);
    }
    raw.map(|v| 0.1 + 0.8 * (v - lo) / (hi - lo))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IlluminationKind {
    UniformScale,
    LinearRamp,
    SmoothField,
}

impl IlluminationKind {
    pub fn name(self) -> &'static str {
        match self {
            IlluminationKind::UniformScale => "uniform_scale",
            IlluminationKind::LinearRamp => "linear_ramp",
            IlluminationKind::SmoothField => "smooth_field",
        }
    }
}

impl std::fmt::Display for IlluminationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A concrete illumination condition.
///
/// For `uniform_scale` the sign of the gain change (brighter or darker) is
/// drawn from `seed`: `L = 1 ± strength`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IlluminationSpec {
    pub kind: IlluminationKind,
    pub strength: f64,
    /// Ramp direction in radians (`linear_ramp` only).
    pub direction: f64,
    /// Smoothing width in pixels (`smooth_field` only).
    pub field_sigma: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl IlluminationSpec {
    /// No illumination change and no noise.
    pub fn identity() -> Self {
        IlluminationSpec {
            kind: IlluminationKind::UniformScale,
            strength: 0.0,
            direction: 0.0,
            field_sigma: 1.0,
            noise_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.strength >= 0.0 && self.strength.is_finite()) {
            return Err(Error::invalid(format!(
                "illumination strength must be >= 0, got {}",
                self.strength
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid(format!(
                "noise sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        if !self.direction.is_finite() {
            return Err(Error::invalid("ramp direction must be finite"));
        }
        if self.kind == IlluminationKind::SmoothField && !(self.field_sigma > 0.0 && self.field_sigma.is_finite()) {
            return Err(Error::invalid(format!(
                "field sigma must be positive, got {}",
                self.field_sigma
            )));
        }
        Ok(())
    }
}

/// The multiplicative field `L` of `spec` on a `width x height` raster.
pub fn illumination_field(width: usize, height: usize, spec: &IlluminationSpec) -> Result<Image> {
    spec.validate()?;
    let s = spec.strength;
    if s == 0.0 {
        return Image::filled(width, height, 1.0);
    }
    match spec.kind {
        IlluminationKind::UniformScale => {
            let mut rng = SplitMix64::new(derive_seed(spec.seed, &[KEY_ILLUMINATION]));
            let sign = if rng.next_u64() & 1 == 0 { 1.0 } else { -1.0 };
            Image::filled(width, height, 1.0 + s * sign)
        }
        IlluminationKind::LinearRamp => {
            let (sin, cos) = spec.direction.sin_cos();
            let (cy, cx) = ((height as f64 - 1.0) / 2.0, (width as f64 - 1.0) / 2.0);
            let t = |r: usize, c: usize| (c as f64 - cx) * cos + (r as f64 - cy) * sin;
            // The raster is symmetric about its center, so t spans [-m, m].
            let m = [(0, 0), (0, width - 1), (height - 1, 0), (height - 1, width - 1)]
                .iter()
                .map(|&(r, c)| t(r, c).abs())
                .fold(0.0, f64::max);
            Image::from_fn(width, height, |r, c| if m > 0.0 { 1.0 + s * t(r, c) / m } else { 1.0 })
        }
        IlluminationKind::SmoothField => {
            let mut rng = SplitMix64::new(derive_seed(spec.seed, &[KEY_FIELD]));
            let white = Image::from_fn(width, height, |_, _| rng.normal())?;
            let smooth = gaussian_smooth(&white, spec.field_sigma)?;
            let (lo, hi) = smooth.min_max();
            if hi - lo <= 0.0 {
                return Image::filled(width, height, 1.0);
            }
            smooth.map(|v| 1.0 - s + 2.0 * s * (v - lo) / (hi - lo))
        }
    }
}

/// `clamp(img * L + noise, 0, 1)`.
pub fn apply_illumination(img: &Image, spec: &IlluminationSpec) -> Result<Image> {
    let field = illumination_field(img.width(), img.height(), spec)?;
    let mut rng = SplitMix64::new(derive_seed(spec.seed, &[KEY_NOISE]));
    let noise = spec.noise_sigma;
    let data = img
        .data()
        .iter()
        .zip(field.data())
        .map(|(&x, &l)| {
            let n = if noise > 0.0 { rng.gaussian(0.0, noise) } else { 0.0 };
            (x * l + n).clamp(0.0, 1.0)
        })
        .collect();
    Image::new(img.width(), img.height(), data)
}

/// An illumination condition with its per-image random parts (seed, ramp
/// direction) left open.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IlluminationTemplate {
    pub kind: IlluminationKind,
    pub strength: f64,
    pub noise_sigma: f64,
    /// Defaults to a quarter of the image size.
    #[serde(default)]
    pub field_sigma: Option<f64>,
}

impl IlluminationTemplate {
    pub fn instantiate(&self, size: usize, rng: &mut SplitMix64) -> IlluminationSpec {
        IlluminationSpec {
            kind: self.kind,
            strength: self.strength,
            direction: rng.uniform(0.0, 2.0 * std::f64::consts::PI),
            field_sigma: self.field_sigma.unwrap_or(size as f64 / 4.0),
            noise_sigma: self.noise_sigma,
            seed: rng.next_u64(),
        }
    }
}

/// Which half of the benchmark a dataset belongs to; the two draw identity
/// seeds from disjoint streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    fn key(self) -> u64 {
        match self {
            Split::Train => 0x0074_7261_696e,
            Split::Test => 0x7465_7374,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    pub identity_id: String,
    pub identity_seed: u64,
    /// Relative path the image is written to.
    pub image_path: String,
    pub illumination: IlluminationSpec,
    pub image: Image,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub entries: Vec<DatasetEntry>,
}

/// Parameters of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub n_ids: usize,
    pub imgs_per_id: usize,
    pub size: usize,
    pub n_blobs: usize,
    /// Share of the identity texture in each face; the rest is a population
    /// texture common to every identity of the benchmark.
    pub identity_weight: f64,
    pub illumination_pool: Vec<IlluminationTemplate>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_ids: 20,
            imgs_per_id: 4,
            size: 64,
            n_blobs: 12,
            identity_weight: 0.5,
            illumination_pool: vec![IlluminationTemplate {
                kind: IlluminationKind::SmoothField,
                strength: 0.6,
                noise_sigma: 0.02,
                field_sigma: None,
            }],
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_ids < 2 || self.imgs_per_id < 2 {
            return Err(Error::invalid(format!(
                "need n_ids >= 2 and imgs_per_id >= 2, got {} / {}",
                self.n_ids, self.imgs_per_id
            )));
        }
        if self.illumination_pool.is_empty() {
            return Err(Error::invalid("illumination pool is empty"));
        }
        if !(self.identity_weight > 0.0 && self.identity_weight <= 1.0) {
            return Err(Error::invalid(format!(
                "identity_weight must be in (0, 1], got {}",
                self.identity_weight
            )));
        }
        IdentitySpec {
            seed: 0,
            n_blobs: self.n_blobs,
            size: self.size,
        }
        .validate()
    }
}

/// Seed of identity `index` of `split`.
pub fn identity_seed(seed: u64, split: Split, index: usize) -> u64 {
    derive_seed(seed, &[split.key(), index as u64])
}

/// The texture shared by every identity built from `seed`.
pub fn population_texture(cfg: &DatasetConfig, seed: u64) -> Result<Image> {
    generate_identity(&IdentitySpec {
        seed: derive_seed(seed, &[KEY_POPULATION]),
        n_blobs: cfg.n_blobs,
        size: cfg.size,
    })
}

/// The face of identity `index`: the identity texture blended with the
/// population texture by `identity_weight`.
pub fn face_texture(cfg: &DatasetConfig, population: &Image, id_seed: u64) -> Result<Image> {
    let own = generate_identity(&IdentitySpec {
        seed: id_seed,
        n_blobs: cfg.n_blobs,
        size: cfg.size,
    })?;
    let w = cfg.identity_weight;
    let data = own
        .data()
        .iter()
        .zip(population.data())
        .map(|(a, p)| w * a + (1.0 - w) * p)
        .collect();
    Image::new(cfg.size, cfg.size, data)
}

/// Renders `n_ids x imgs_per_id` images. Image `k` of an identity uses a pool
/// template and seed drawn from a stream keyed by `(split, identity, k)`.
pub fn build_dataset(cfg: &DatasetConfig, seed: u64, split: Split) -> Result<Dataset> {
    cfg.validate()?;
    for t in &cfg.illumination_pool {
        t.instantiate(cfg.size, &mut SplitMix64::new(0)).validate()?;
    }
    let jobs: Vec<(usize, usize)> = (0..cfg.n_ids)
        .flat_map(|i| (0..cfg.imgs_per_id).map(move |k| (i, k)))
        .collect();
    let population = population_texture(cfg, seed)?;
    let entries = jobs
        .par_iter()
        .map(|&(i, k)| {
            let id_seed = identity_seed(seed, split, i);
            let texture = face_texture(cfg, &population, id_seed)?;
            let mut rng = SplitMix64::new(derive_seed(id_seed, &[KEY_IMAGE, k as u64]));
            let template = cfg.illumination_pool[rng.below(cfg.illumination_pool.len() as u64) as usize];
            let illumination = template.instantiate(cfg.size, &mut rng);
            let image = apply_illumination(&texture, &illumination)?;
            Ok(DatasetEntry {
                identity_id: format!("{}{i:03}", split.name()),
                identity_seed: id_seed,
                image_path: format!("{}/id{i:03}_{k:02}.pgm", split.name()),
                illumination,
                image,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { entries })
}

impl Dataset {
    pub fn labels(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.identity_id.as_str()).collect()
    }

    /// CSV `identity_id,image_path,illum_kind,illum_strength,seed`; `seed` is
    /// the illumination seed of the image.
    pub fn manifest_csv(&self) -> String {
        let mut s = String::from("identity_id,image_path,illum_kind,illum_strength,seed\n");
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                e.identity_id, e.image_path, e.illumination.kind, e.illumination.strength, e.illumination.seed
            );
        }
        s
    }
}

/// Benchmark parameters: one dataset shape shared by the train and test
/// splits, and the master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub seed: u64,
    pub dataset: DatasetConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            seed: 1,
            dataset: DatasetConfig::default(),
        }
    }
}

/// Scores of one evaluated pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRecord {
    pub pair: Pair,
    pub scores: Vec<f64>,
    pub fused: f64,
}

/// Results of one system on the test split.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantReport {
    pub name: &'static str,
    pub pairs: Vec<PairRecord>,
    pub score_set: ScoreSet,
    pub roc: RocCurve,
    pub summary: EvalSummary,
}

impl VariantReport {
    fn new(name: &'static str, pairs: Vec<PairRecord>) -> Result<Self> {
        let (mut genuine, mut impostor) = (Vec::new(), Vec::new());
        for p in &pairs {
            if p.pair.genuine {
                genuine.push(p.fused);
            } else {
                impostor.push(p.fused);
            }
        }
        let score_set = ScoreSet::new(genuine, impostor);
        Ok(VariantReport {
            name,
            roc: roc(&score_set)?,
            summary: summarize(&score_set)?,
            pairs,
            score_set,
        })
    }

    /// CSV `pair_id,label,score_1..score_n,fused`; `label` is 1 for genuine.
    pub fn scores_csv(&self, test: &Dataset) -> String {
        let n = self.pairs.first().map_or(0, |p| p.scores.len());
        let mut s = String::from("pair_id,label");
        for i in 1..=n {
            let _ = write!(s, ",score_{i}");
        }
        s.push_str(",fused\n");
        for p in &self.pairs {
            let stem = |i: usize| {
                let path = &test.entries[i].image_path;
                path.rsplit('/')
                    .next()
                    .unwrap_or(path)
                    .trim_end_matches(".pgm")
                    .to_string()
            };
            let _ = write!(s, "{}:{},{}", stem(p.pair.a), stem(p.pair.b), u8::from(p.pair.genuine));
            for v in &p.scores {
                let _ = write!(s, ",{v}");
            }
            let _ = writeln!(s, ",{}", p.fused);
        }
        s
    }

    pub fn roc_csv(&self) -> String {
        roc_csv(&self.roc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub train: Dataset,
    pub test: Dataset,
    pub pipeline: VariantReport,
    /// Raw pixels, one subspace, no fusion; `improvement` is measured
    /// against this.
    pub baseline: VariantReport,
    /// Direct cosine of raw pixel vectors, reported for reference only.
    pub reference: VariantReport,
}

impl BenchReport {
    /// `vr@0.01` of the pipeline minus that of the baseline.
    pub fn improvement(&self) -> f64 {
        self.pipeline.summary.vr_at(0.01).unwrap_or(0.0) - self.baseline.summary.vr_at(0.01).unwrap_or(0.0)
    }

    /// Text summary comparing the two systems.
    pub fn summary_text(&self) -> String {
        let d = &self.config.dataset;
        let mut s = String::new();
        let _ = writeln!(s, "seed: {}", self.config.seed);
        let _ = writeln!(
            s,
            "dataset: {} identities x {} images per split, {}x{} pixels",
            d.n_ids, d.imgs_per_id, d.size, d.size
        );
        for t in &d.illumination_pool {
            let _ = writeln!(
                s,
                "illumination: {} strength {} noise {} (synthetic stand-in)",
                t.kind, t.strength, t.noise_sigma
            );
        }
        s.push('\n');
        s.push_str(&self.pipeline.summary.render(self.pipeline.name));
        s.push('\n');
        s.push_str(&self.baseline.summary.render(self.baseline.name));
        s.push('\n');
        s.push_str(&self.reference.summary.render(self.reference.name));
        s.push('\n');
        let _ = writeln!(s, "improvement vr@0.01: {:.6}", self.improvement());
        s
    }
}

fn extract_all(dataset: &Dataset, cfg: &PipelineConfig) -> Result<Vec<Vec<FeatureVector>>> {
    dataset.entries.par_iter().map(|e| extract(&e.image, cfg)).collect()
}

fn pixel_matrix(dataset: &Dataset) -> Result<Matrix> {
    let rows: Vec<&[f64]> = dataset.entries.iter().map(|e| e.image.data()).collect();
    Matrix::from_rows(&rows)
}

fn single_score_variant(name: &'static str, test: &Dataset, vectors: &[Vec<f64>]) -> Result<VariantReport> {
    let pairs = all_pairs(&test.labels());
    let records = pairs
        .par_iter()
        .map(|&pair| {
            let s = cosine_score(&vectors[pair.a], &vectors[pair.b])?;
            Ok(PairRecord {
                pair,
                scores: vec![s],
                fused: s,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    VariantReport::new(name, records)
}

/// One kernel PCA subspace fitted on raw pixel vectors with the pipeline's
/// kernel and component count; cosine score, no preprocessing, no fusion.
fn raw_baseline(train_set: &Dataset, test: &Dataset, cfg: &PipelineConfig) -> Result<VariantReport> {
    let x = pixel_matrix(train_set)?;
    let model = fit_kpca(&x, cfg.kernel.resolve(x.cols()), cfg.n_components.min(x.rows()))?;
    let projected = test
        .entries
        .par_iter()
        .map(|e| project(&model, e.image.data()))
        .collect::<Result<Vec<_>>>()?;
    single_score_variant("raw_baseline", test, &projected)
}

/// Cosine of the raw pixel vectors themselves.
fn raw_cosine(test: &Dataset) -> Result<VariantReport> {
    let vectors: Vec<Vec<f64>> = test.entries.iter().map(|e| e.image.data().to_vec()).collect();
    single_score_variant("raw_cosine", test, &vectors)
}

/// Builds both splits, trains the pipeline and the raw-pixel baseline on the
/// train split and evaluates both, plus the direct raw cosine, on the test
/// split.
pub fn run_benchmark(bench: &BenchConfig, cfg: &PipelineConfig) -> Result<BenchReport> {
    cfg.validate().stage("config")?;
    let train_set = build_dataset(&bench.dataset, bench.seed, Split::Train).stage("dataset")?;
    let test_set = build_dataset(&bench.dataset, bench.seed, Split::Test).stage("dataset")?;

    let train_features = extract_all(&train_set, cfg)?;
    let trained = train(&train_features, &train_set.labels(), cfg).stage("train")?;

    let test_features = extract_all(&test_set, cfg)?;
    let projections = trained.project_all(&test_features).stage("subspace")?;
    let scored = trained.score_pairs(&projections, &test_set.labels()).stage("scoring")?;
    let records = scored
        .pairs
        .into_iter()
        .zip(scored.scores)
        .map(|(pair, scores)| {
            let fused = trained.fused_score(&scores)?;
            Ok(PairRecord { pair, scores, fused })
        })
        .collect::<Result<Vec<_>>>()
        .stage("fusion")?;
    let pipeline = VariantReport::new("pipeline", records).stage("eval")?;
    let baseline = raw_baseline(&train_set, &test_set, cfg).stage("baseline")?;
    let reference = raw_cosine(&test_set).stage("eval")?;
    Ok(BenchReport {
        config: bench.clone(),
        train: train_set,
        test: test_set,
        pipeline,
        baseline,
        reference,
    })
}
