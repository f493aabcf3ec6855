//! Illumination-robust face verification.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`preprocess`]: normalize the image gradient by a smoothed estimate of the
//!    illumination, denoise the normalized field with Perona–Malik diffusion and
//!    reintegrate it into an image (the integral normalized gradient image).
//! 2. [`features`]: hybrid Fourier features, one vector per (domain, band) pair.
//! 3. [`subspace`]: one kernel PCA model per feature descriptor; probe/gallery
//!    pairs are compared by cosine similarity in each subspace.
//! 4. [`fusion`]: the per-classifier scores are fused into a single
//!    log-likelihood ratio under independent Gaussian score models.
//!
//! [`eval`] provides ROC / verification-rate metrics and [`synthbench`] renders a
//! deterministic synthetic benchmark that exercises everything end to end.

pub mod error;
pub mod eval;
pub mod features;
pub mod fusion;
pub mod imaging;
pub mod linalg;
pub mod pipeline;
pub mod preprocess;
pub mod rng;
pub mod subspace;
pub mod synthbench;

pub use error::{Error, Result};
pub use imaging::Image;
