use super::{GradientField, GradientOperator};
use crate::error::{Error, Result};
use crate::imaging::Image;

/// Image derivatives with replicate-edge boundaries.
///
/// Both stencils are scaled so a unit-slope ramp has gradient 1:
/// central `(X[j+1] - X[j-1]) / 2`, Sobel `[-1 0 1; -2 0 2; -1 0 1] / 8` (and
/// its transpose for the vertical component), applied as a correlation.
pub fn gradient(img: &Image, op: GradientOperator) -> Result<GradientField> {
    let (w, h) = (img.width(), img.height());
    let min = op.min_side();
    if w < min || h < min {
        return Err(Error::Size(format!(
            "{op} gradient needs at least {min}x{min}, got {w}x{h}"
        )));
    }
    let mut gx = Vec::with_capacity(w * h);
    let mut gy = Vec::with_capacity(w * h);
    for r in 0..h as isize {
        for c in 0..w as isize {
            let p = |dr: isize, dc: isize| img.get_clamped(r + dr, c + dc);
            match op {
                GradientOperator::Central => {
                    gx.push((p(0, 1) - p(0, -1)) / 2.0);
                    gy.push((p(1, 0) - p(-1, 0)) / 2.0);
                }
                GradientOperator::Sobel => {
                    let x = (p(-1, 1) - p(-1, -1)) + 2.0 * (p(0, 1) - p(0, -1)) + (p(1, 1) - p(1, -1));
                    let y = (p(1, -1) - p(-1, -1)) + 2.0 * (p(1, 0) - p(-1, 0)) + (p(1, 1) - p(-1, 1));
                    gx.push(x / 8.0);
                    gy.push(y / 8.0);
                }
            }
        }
    }
    GradientField::new(w, h, gx, gy)
}

/// Sampled Gaussian of radius `ceil(3 sigma)`, renormalized to sum 1.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let two_var = 2.0 * sigma * sigma;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|x| (-((x * x) as f64) / two_var).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

fn convolve_rows(src: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let radius = (kernel.len() / 2) as isize;
    let mut out = vec![0.0; w * h];
    for r in 0..h {
        let row = &src[r * w..(r + 1) * w];
        for c in 0..w {
            let mut acc = 0.0;
            for (k, &wt) in kernel.iter().enumerate() {
                let cc = (c as isize + k as isize - radius).clamp(0, w as isize - 1) as usize;
                acc += wt * row[cc];
            }
            out[r * w + c] = acc;
        }
    }
    out
}

fn convolve_cols(src: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let radius = (kernel.len() / 2) as isize;
    let mut out = vec![0.0; w * h];
    for r in 0..h {
        for (k, &wt) in kernel.iter().enumerate() {
            let rr = (r as isize + k as isize - radius).clamp(0, h as isize - 1) as usize;
            let src_row = &src[rr * w..(rr + 1) * w];
            let dst = &mut out[r * w..(r + 1) * w];
            for (d, s) in dst.iter_mut().zip(src_row) {
                *d += wt * s;
            }
        }
    }
    out
}

/// Separable Gaussian blur with replicate-edge boundaries.
pub fn gaussian_smooth(img: &Image, sigma: f64) -> Result<Image> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("smoothing sigma must be positive, got {sigma}")));
    }
    let kernel = gaussian_kernel(sigma);
    let (w, h) = (img.width(), img.height());
    let rows = convolve_rows(img.data(), w, h, &kernel);
    Ok(Image::from_raw(w, h, convolve_cols(&rows, w, h, &kernel)))
}
