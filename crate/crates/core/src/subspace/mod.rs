//! Kernel PCA subspaces and cosine scoring.
//!
//! A model stores its training features, the eigenvectors of the centered Gram
//! matrix (scaled by `1/√λ`) and the centering statistics needed to center the
//! kernel row of an unseen sample.

mod persist;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, jacobi_eigen, Matrix};

pub use persist::MAGIC as MODEL_MAGIC;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    Linear,
    Polynomial { degree: u32, offset: f64 },
    Rbf { gamma: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Polynomial { degree, offset } => {
                if degree >= 1 && offset >= 0.0 && offset.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid(format!(
                        "polynomial kernel needs degree >= 1 and offset >= 0, got {degree} / {offset}"
                    )))
                }
            }
            KernelSpec::Rbf { gamma } => {
                if gamma > 0.0 && gamma.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid(format!("rbf gamma must be positive, got {gamma}")))
                }
            }
        }
    }
}

/// Kernel choice as written in configuration files; an RBF without `gamma`
/// resolves to `1 / d` for `d`-dimensional inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum KernelConfig {
    Linear,
    Polynomial {
        #[serde(default = "default_degree")]
        degree: u32,
        #[serde(default = "default_offset")]
        offset: f64,
    },
    Rbf {
        #[serde(default)]
        gamma: Option<f64>,
    },
}

fn default_degree() -> u32 {
    2
}

fn default_offset() -> f64 {
    1.0
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig::Rbf { gamma: None }
    }
}

impl KernelConfig {
    pub fn resolve(&self, dim: usize) -> KernelSpec {
        match *self {
            KernelConfig::Linear => KernelSpec::Linear,
            KernelConfig::Polynomial { degree, offset } => KernelSpec::Polynomial { degree, offset },
            KernelConfig::Rbf { gamma } => KernelSpec::Rbf {
                gamma: gamma.unwrap_or(1.0 / dim.max(1) as f64),
            },
        }
    }
}

fn check_dims(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    Ok(())
}

fn kernel_unchecked(x: &[f64], y: &[f64], spec: &KernelSpec) -> f64 {
    match *spec {
        KernelSpec::Linear => dot(x, y),
        KernelSpec::Polynomial { degree, offset } => (dot(x, y) + offset).powi(degree as i32),
        KernelSpec::Rbf { gamma } => {
            let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
            (-gamma * d2).exp()
        }
    }
}

pub fn kernel_eval(x: &[f64], y: &[f64], spec: &KernelSpec) -> Result<f64> {
    check_dims(x, y)?;
    Ok(kernel_unchecked(x, y, spec))
}

/// Double-centers a Gram matrix: `K - 1K - K1 + 1K1` with `1` the matrix of
/// `1/n` entries.
pub fn center_gram(k: &Matrix) -> Result<Matrix> {
    if !k.is_square() {
        return Err(Error::invalid(format!(
            "Gram matrix must be square, got {}x{}",
            k.rows(),
            k.cols()
        )));
    }
    let n = k.rows();
    let (row_means, grand) = gram_means(k);
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = k[(i, j)] - row_means[i] - row_means[j] + grand;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

fn gram_means(k: &Matrix) -> (Vec<f64>, f64) {
    let n = k.rows();
    let row_means: Vec<f64> = (0..n).map(|i| k.row(i).iter().sum::<f64>() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    (row_means, grand)
}

/// Eigenvalues at or below this fraction of the largest are discarded.
pub const EIGENVALUE_FLOOR: f64 = 1e-10;

/// A fitted kernel PCA subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceModel {
    pub kernel: KernelSpec,
    /// Training samples, one per row (`n x d`).
    pub train_features: Matrix,
    /// Expansion coefficients, one column per component (`n x m`), each the
    /// unit eigenvector divided by `√λ`.
    pub alphas: Matrix,
    /// Retained eigenvalues of the centered Gram matrix, descending.
    pub eigenvalues: Vec<f64>,
    /// Row means of the uncentered training Gram matrix.
    pub train_kernel_row_means: Vec<f64>,
    /// Grand mean of the uncentered training Gram matrix.
    pub train_kernel_grand_mean: f64,
}

impl SubspaceModel {
    pub fn n_components(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn input_dim(&self) -> usize {
        self.train_features.cols()
    }

    pub fn n_train(&self) -> usize {
        self.train_features.rows()
    }

    /// Projections of the training samples, one row per sample.
    pub fn training_projections(&self) -> Matrix {
        let rows: Vec<Vec<f64>> = (0..self.n_train())
            .map(|i| self.project_unchecked(self.train_features.row(i)))
            .collect();
        Matrix::from_rows(&rows).expect("uniform projection length")
    }

    fn project_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n_train();
        let k: Vec<f64> = (0..n)
            .map(|i| kernel_unchecked(x, self.train_features.row(i), &self.kernel))
            .collect();
        let k_mean = k.iter().sum::<f64>() / n as f64;
        let centered: Vec<f64> = k
            .iter()
            .zip(&self.train_kernel_row_means)
            .map(|(ki, rm)| ki - k_mean - rm + self.train_kernel_grand_mean)
            .collect();
        (0..self.n_components())
            .map(|c| (0..n).map(|i| self.alphas[(i, c)] * centered[i]).sum())
            .collect()
    }
}

/// Fits kernel PCA on the rows of `x`, keeping at most `n_components`
/// components whose eigenvalue exceeds [`EIGENVALUE_FLOOR`] times the largest.
///
/// Each unit eigenvector `a` is stored as `a / √λ`, so the training
/// projections along a component have divisor-`n` variance `λ / n`.
pub fn fit_kpca(x: &Matrix, spec: KernelSpec, n_components: usize) -> Result<SubspaceModel> {
    spec.validate()?;
    let n = x.rows();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "kernel PCA needs at least 2 samples, got {n}"
        )));
    }
    if n_components == 0 || n_components > n {
        return Err(Error::invalid(format!(
            "n_components must be in 1..={n}, got {n_components}"
        )));
    }

    let mut gram = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = kernel_unchecked(x.row(i), x.row(j), &spec);
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    let (row_means, grand_mean) = gram_means(&gram);
    let centered = center_gram(&gram)?;
    let eig = jacobi_eigen(&centered)?;

    // Absolute floor: eigenvalues at round-off level of the Gram entries are
    // numerically zero even when they are the largest (e.g. identical samples).
    let round_off = n as f64 * f64::EPSILON * gram.max_abs().max(1.0);
    let lambda_max = eig.values.first().copied().unwrap_or(0.0);
    if lambda_max <= round_off {
        return Err(Error::DegenerateTrainingSet);
    }
    let floor = (EIGENVALUE_FLOOR * lambda_max).max(round_off);
    let kept: Vec<usize> = (0..n).filter(|&k| eig.values[k] > floor).take(n_components).collect();

    let mut alphas = Matrix::zeros(n, kept.len());
    for (c, &k) in kept.iter().enumerate() {
        let scale = 1.0 / eig.values[k].sqrt();
        for i in 0..n {
            alphas[(i, c)] = eig.vectors[(i, k)] * scale;
        }
    }
    Ok(SubspaceModel {
        kernel: spec,
        train_features: x.clone(),
        alphas,
        eigenvalues: kept.iter().map(|&k| eig.values[k]).collect(),
        train_kernel_row_means: row_means,
        train_kernel_grand_mean: grand_mean,
    })
}

/// Projects `x` onto the model's components.
pub fn project(model: &SubspaceModel, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            found: x.len(),
        });
    }
    Ok(model.project_unchecked(x))
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine_score(u: &[f64], v: &[f64]) -> Result<f64> {
    check_dims(u, v)?;
    if u.is_empty() {
        return Err(Error::invalid("cosine of empty vectors"));
    }
    let nu = dot(u, u);
    let nv = dot(v, v);
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot(u, v) / (nu * nv).sqrt()).clamp(-1.0, 1.0))
}
