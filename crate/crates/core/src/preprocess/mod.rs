//! Illumination-insensitive preprocessing: the integral normalized gradient
//! image.
//!
//! An image is modeled as a fast-varying intrinsic texture multiplied by a
//! slowly varying illumination factor. Dividing the image gradient by a
//! Gaussian-smoothed copy of the image cancels the illumination factor; the
//! normalized field is then denoised with Perona–Malik diffusion and
//! reintegrated into an image by a Neumann Poisson solve.
//!
//! ```text
//! X ──► [equalize] ──► ∇X / max(K * X, ε) ──► diffuse(Nx), diffuse(Ny) ──► integrate ──► rescale
//! ```

mod diffusion;
mod filters;
mod poisson;

pub use diffusion::anisotropic_diffuse;
pub use filters::{gaussian_kernel, gaussian_smooth, gradient};
pub use poisson::{integrate_gradients, Integration};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{quantize, Image};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientOperator {
    /// `(X[j+1] - X[j-1]) / 2`.
    Central,
    /// 3x3 Sobel kernels scaled by 1/8.
    Sobel,
}

impl GradientOperator {
    /// Smallest image side the stencil supports.
    pub fn min_side(self) -> usize {
        match self {
            GradientOperator::Central => 2,
            GradientOperator::Sobel => 3,
        }
    }
}

impl std::fmt::Display for GradientOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GradientOperator::Central => "central",
            GradientOperator::Sobel => "sobel",
        })
    }
}

impl std::str::FromStr for GradientOperator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "central" => Ok(GradientOperator::Central),
            "sobel" => Ok(GradientOperator::Sobel),
            other => Err(Error::invalid(format!("unknown gradient operator {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub gradient_operator: GradientOperator,
    /// Width (pixels) of the Gaussian used to estimate the illumination.
    pub smoothing_sigma: f64,
    /// Floor on the smoothed image in the normalization denominator.
    pub epsilon: f64,
    pub diffusion_kappa: f64,
    pub diffusion_lambda: f64,
    pub diffusion_iters: usize,
    pub integration_iters: usize,
    pub integration_tol: f64,
    pub equalize_first: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            gradient_operator: GradientOperator::Central,
            smoothing_sigma: 3.0,
            epsilon: 1e-3,
            diffusion_kappa: 0.1,
            diffusion_lambda: 0.2,
            diffusion_iters: 10,
            integration_iters: 10_000,
            integration_tol: 1e-6,
            equalize_first: false,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("smoothing_sigma", self.smoothing_sigma)?;
        positive("epsilon", self.epsilon)?;
        positive("diffusion_kappa", self.diffusion_kappa)?;
        positive("integration_tol", self.integration_tol)?;
        if !(self.diffusion_lambda > 0.0 && self.diffusion_lambda <= 0.25) {
            return Err(Error::invalid(format!(
                "diffusion_lambda must be in (0, 0.25], got {}",
                self.diffusion_lambda
            )));
        }
        if self.integration_iters == 0 {
            return Err(Error::invalid("integration_iters must be at least 1"));
        }
        Ok(())
    }
}

/// Paired horizontal / vertical derivative rasters.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    width: usize,
    height: usize,
    gx: Vec<f64>,
    gy: Vec<f64>,
}

impl GradientField {
    pub fn new(width: usize, height: usize, gx: Vec<f64>, gy: Vec<f64>) -> Result<Self> {
        for g in [&gx, &gy] {
            if g.len() != width * height {
                return Err(Error::DimensionMismatch {
                    expected: width * height,
                    found: g.len(),
                });
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("non-finite gradient component"));
            }
        }
        Ok(GradientField { width, height, gx, gy })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        GradientField {
            width,
            height,
            gx: vec![0.0; width * height],
            gy: vec![0.0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn gx(&self) -> &[f64] {
        &self.gx
    }

    pub fn gy(&self) -> &[f64] {
        &self.gy
    }

    /// `a * self + b * other`, componentwise.
    pub fn combine(&self, a: f64, other: &GradientField, b: f64) -> Result<GradientField> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::DimensionMismatch {
                expected: self.width * self.height,
                found: other.width * other.height,
            });
        }
        let lin = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| a * x + b * y).collect();
        GradientField::new(
            self.width,
            self.height,
            lin(&self.gx, &other.gx),
            lin(&self.gy, &other.gy),
        )
    }

    /// The two components as images.
    pub fn components(&self) -> (Image, Image) {
        (
            Image::from_raw(self.width, self.height, self.gx.clone()),
            Image::from_raw(self.width, self.height, self.gy.clone()),
        )
    }

    fn from_components(gx: Image, gy: Image) -> GradientField {
        GradientField {
            width: gx.width(),
            height: gx.height(),
            gx: gx.into_data(),
            gy: gy.into_data(),
        }
    }
}

/// 256-bin histogram equalization on the quantized grid `round(v * 255)`.
///
/// Level `l` maps to `(cdf(l) - cdf_min) / (N - cdf_min)`, where `cdf_min` is
/// the count of the lowest occupied level. An image that uses all 256 levels
/// equally often is therefore mapped onto itself. A single occupied level
/// (constant image) is left at its quantized value.
pub fn histogram_equalize(img: &Image) -> Image {
    let levels: Vec<u8> = img.data().iter().map(|&v| quantize(v)).collect();
    let mut hist = [0usize; 256];
    for &l in &levels {
        hist[l as usize] += 1;
    }
    let mut cdf = [0usize; 256];
    let mut acc = 0;
    for (c, h) in cdf.iter_mut().zip(hist) {
        acc += h;
        *c = acc;
    }
    let n = levels.len();
    let cdf_min = hist.iter().copied().find(|&h| h > 0).unwrap_or(0);
    let data = if n == cdf_min {
        levels.iter().map(|&l| l as f64 / 255.0).collect()
    } else {
        let denom = (n - cdf_min) as f64;
        levels
            .iter()
            .map(|&l| (cdf[l as usize] - cdf_min) as f64 / denom)
            .collect()
    };
    Image::from_raw(img.width(), img.height(), data)
}

/// The illumination-normalized gradient `∇X / max(K * X, ε)`.
pub fn normalized_gradient(img: &Image, cfg: &PreprocessConfig) -> Result<GradientField> {
    cfg.validate()?;
    let grad = gradient(img, cfg.gradient_operator)?;
    let smooth = gaussian_smooth(img, cfg.smoothing_sigma)?;
    let eps = cfg.epsilon;
    let divide = |g: &[f64]| -> Vec<f64> { g.iter().zip(smooth.data()).map(|(g, w)| g / w.max(eps)).collect() };
    GradientField::new(img.width(), img.height(), divide(grad.gx()), divide(grad.gy()))
}

/// Min–max rescale to `[0, 1]`; a flat image maps to all 0.5.
pub fn rescale_unit(img: &Image) -> Image {
    let (lo, hi) = img.min_max();
    let data = if hi > lo {
        let span = hi - lo;
        img.data().iter().map(|v| (v - lo) / span).collect()
    } else {
        vec![0.5; img.len()]
    };
    Image::from_raw(img.width(), img.height(), data)
}

/// Result of [`preprocess_chain_detailed`].
#[derive(Debug, Clone)]
pub struct PreprocessOutput {
    pub image: Image,
    /// Status of the Poisson reintegration; `converged == false` is a warning,
    /// the image is still usable.
    pub integration: Integration,
}

/// Full chain: optional equalization, gradient normalization, diffusion of each
/// normalized component, Poisson reintegration and min–max rescale.
pub fn preprocess_chain(img: &Image, cfg: &PreprocessConfig) -> Result<Image> {
    preprocess_chain_detailed(img, cfg).map(|out| out.image)
}

pub fn preprocess_chain_detailed(img: &Image, cfg: &PreprocessConfig) -> Result<PreprocessOutput> {
    cfg.validate()?;
    if img.width() < 3 || img.height() < 3 {
        return Err(Error::Size(format!(
            "preprocessing needs at least 3x3, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    let equalized;
    let source = if cfg.equalize_first {
        equalized = histogram_equalize(img);
        &equalized
    } else {
        img
    };
    let normalized = normalized_gradient(source, cfg)?;
    let (nx, ny) = normalized.components();
    let nx = anisotropic_diffuse(&nx, cfg.diffusion_kappa, cfg.diffusion_lambda, cfg.diffusion_iters)?;
    let ny = anisotropic_diffuse(&ny, cfg.diffusion_kappa, cfg.diffusion_lambda, cfg.diffusion_iters)?;
    let integration = integrate_gradients(&GradientField::from_components(nx, ny), cfg)?;
    Ok(PreprocessOutput {
        image: rescale_unit(&integration.image),
        integration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random_image(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = SplitMix64::new(seed);
        Image::from_fn(w, h, |_, _| rng.uniform(0.05, 1.0)).unwrap()
    }

    #[test]
    fn equalize_constant() {
        let img = Image::filled(4, 3, 0.3).unwrap();
        let out = histogram_equalize(&img);
        let first = out.data()[0];
        assert!(out.data().iter().all(|&v| v == first));
    }

    #[test]
    fn equalize_uniform_histogram_is_identity() {
        // Every level twice; independent CDF: level l -> (2(l+1) - 2) / (512 - 2) = l / 255.
        let data: Vec<f64> = (0..512).map(|i| (i % 256) as f64 / 255.0).collect();
        let img = Image::new(32, 16, data).unwrap();
        let out = histogram_equalize(&img);
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn equalize_two_pixels_monotone() {
        let img = Image::new(2, 1, vec![0.0, 1.0]).unwrap();
        let out = histogram_equalize(&img);
        assert!(out.data()[0] <= out.data()[1]);
        assert_eq!(out.data(), &[0.0, 1.0]);
    }

    #[test]
    fn equalize_is_monotone() {
        let img = random_image(9, 7, 4);
        let out = histogram_equalize(&img);
        for i in 0..img.len() {
            for j in 0..img.len() {
                if img.data()[i] < img.data()[j] {
                    assert!(out.data()[i] <= out.data()[j]);
                }
            }
        }
        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn config_validation() {
        assert!(PreprocessConfig::default().validate().is_ok());
        let bad = PreprocessConfig {
            diffusion_lambda: 0.3,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = PreprocessConfig {
            epsilon: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn config_json_defaults() {
        let cfg: PreprocessConfig = serde_json::from_str(r#"{"gradient_operator": "sobel"}"#).unwrap();
        assert_eq!(cfg.gradient_operator, GradientOperator::Sobel);
        assert_eq!(cfg.smoothing_sigma, 3.0);
    }

    #[test]
    fn normalized_gradient_constant_is_zero() {
        let img = Image::filled(6, 5, 0.4).unwrap();
        let n = normalized_gradient(&img, &PreprocessConfig::default()).unwrap();
        assert!(n.gx().iter().chain(n.gy()).all(|&v| v == 0.0));
    }

    #[test]
    fn normalized_gradient_matches_elementwise_oracle() {
        let img = random_image(8, 8, 21);
        let cfg = PreprocessConfig::default();
        let n = normalized_gradient(&img, &cfg).unwrap();

        // Independent route: central differences and an explicitly built 2D
        // truncated Gaussian applied by direct double sum.
        let radius = (3.0 * cfg.smoothing_sigma).ceil() as isize;
        let w1: Vec<f64> = (-radius..=radius)
            .map(|k| (-(k * k) as f64 / (2.0 * cfg.smoothing_sigma.powi(2))).exp())
            .collect();
        let z: f64 = w1.iter().sum();
        for r in 0..8isize {
            for c in 0..8isize {
                let mut s = 0.0;
                for dr in -radius..=radius {
                    for dc in -radius..=radius {
                        let w = w1[(dr + radius) as usize] * w1[(dc + radius) as usize] / (z * z);
                        s += w * img.get_clamped(r + dr, c + dc);
                    }
                }
                assert!(s > cfg.epsilon);
                let gx = (img.get_clamped(r, c + 1) - img.get_clamped(r, c - 1)) / 2.0;
                let gy = (img.get_clamped(r + 1, c) - img.get_clamped(r - 1, c)) / 2.0;
                let i = (r * 8 + c) as usize;
                assert!((n.gx()[i] - gx / s).abs() < 1e-12);
                assert!((n.gy()[i] - gy / s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normalized_gradient_scale_invariance() {
        let cfg = PreprocessConfig::default();
        for seed in 0..5 {
            let img = random_image(12, 10, seed);
            let base = normalized_gradient(&img, &cfg).unwrap();
            for c in [0.5, 1.0, 1.7, 2.0, 3.3, 4.0] {
                let scaled = normalized_gradient(&img.scale(c).unwrap(), &cfg).unwrap();
                for (a, b) in base
                    .gx()
                    .iter()
                    .chain(base.gy())
                    .zip(scaled.gx().iter().chain(scaled.gy()))
                {
                    assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn epsilon_floor_keeps_output_finite() {
        let img = Image::from_fn(5, 5, |_, c| if c == 2 { 1e-9 } else { 0.0 }).unwrap();
        let n = normalized_gradient(&img, &PreprocessConfig::default()).unwrap();
        assert!(n.gx().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn chain_constant_image_is_half() {
        let img = Image::filled(8, 8, 0.7).unwrap();
        let out = preprocess_chain(&img, &PreprocessConfig::default()).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn chain_rejects_tiny_images() {
        let img = Image::filled(2, 8, 0.7).unwrap();
        assert!(matches!(
            preprocess_chain(&img, &PreprocessConfig::default()),
            Err(Error::Size(_))
        ));
    }

    #[test]
    fn chain_scale_invariance_and_determinism() {
        let cfg = PreprocessConfig::default();
        let img = random_image(16, 16, 8);
        let a = preprocess_chain(&img, &cfg).unwrap();
        let again = preprocess_chain(&img, &cfg).unwrap();
        assert_eq!(a, again);
        for c in [0.5, 2.0] {
            let b = preprocess_chain(&img.scale(c).unwrap(), &cfg).unwrap();
            assert!(a.max_abs_diff(&b) < 1e-6);
        }
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn chain_with_equalization_and_sobel_runs() {
        let cfg = PreprocessConfig {
            gradient_operator: GradientOperator::Sobel,
            equalize_first: true,
            ..Default::default()
        };
        let out = preprocess_chain_detailed(&random_image(12, 12, 3), &cfg).unwrap();
        assert!(out.integration.converged);
        let (lo, hi) = out.image.min_max();
        assert_eq!((lo, hi), (0.0, 1.0));
    }
}
