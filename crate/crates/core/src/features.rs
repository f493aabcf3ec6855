//! Hybrid Fourier features.
//!
//! One image yields several feature vectors, one per [`Descriptor`]: a Fourier
//! domain (concatenated real/imaginary parts, or magnitude) restricted to a
//! radial frequency band. Each vector feeds its own classifier.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::Image;

/// Unnormalized 2-D DFT, DC at index `(0, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    width: usize,
    height: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Spectrum {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> &[f64] {
        &self.im
    }

    /// `|F|²` summed over all bins.
    pub fn energy(&self) -> f64 {
        self.re.iter().zip(&self.im).map(|(a, b)| a * a + b * b).sum()
    }
}

/// `(cos, sin)` of `-2πk/n` for `k in 0..n`.
fn twiddles(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|k| {
            let angle = -2.0 * std::f64::consts::PI * k as f64 / n as f64;
            (angle.cos(), angle.sin())
        })
        .collect()
}

/// In-place-style 1-D DFT of a strided complex sequence.
fn dft_1d(re: &[f64], im: &[f64], tw: &[(f64, f64)], out_re: &mut [f64], out_im: &mut [f64]) {
    let n = re.len();
    for k in 0..n {
        let (mut sr, mut si) = (0.0, 0.0);
        for j in 0..n {
            let (c, s) = tw[(k * j) % n];
            sr += re[j] * c - im[j] * s;
            si += re[j] * s + im[j] * c;
        }
        out_re[k] = sr;
        out_im[k] = si;
    }
}

/// Forward 2-D DFT, `F(u, v) = Σ X(i, j) exp(-2πι (u i / H + v j / W))`,
/// computed row-column.
pub fn dft2(img: &Image) -> Spectrum {
    let (w, h) = (img.width(), img.height());
    let tw_w = twiddles(w);
    let tw_h = twiddles(h);

    // Rows first.
    let mut re = vec![0.0; w * h];
    let mut im = vec![0.0; w * h];
    let zeros = vec![0.0; w];
    for r in 0..h {
        let src = &img.data()[r * w..(r + 1) * w];
        let (dr, di) = (&mut re[r * w..(r + 1) * w], &mut im[r * w..(r + 1) * w]);
        dft_1d(src, &zeros, &tw_w, dr, di);
    }

    // Then columns.
    let mut col_re = vec![0.0; h];
    let mut col_im = vec![0.0; h];
    let mut out_re = vec![0.0; h];
    let mut out_im = vec![0.0; h];
    for c in 0..w {
        for r in 0..h {
            col_re[r] = re[r * w + c];
            col_im[r] = im[r * w + c];
        }
        dft_1d(&col_re, &col_im, &tw_h, &mut out_re, &mut out_im);
        for r in 0..h {
            re[r * w + c] = out_re[r];
            im[r * w + c] = out_im[r];
        }
    }
    Spectrum {
        width: w,
        height: h,
        re,
        im,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    RealImag,
    Magnitude,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    Low,
    Mid,
    Full,
}

/// Which (domain, band) a feature vector was extracted from. Serialized as its
/// [`tag`](Descriptor::tag).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Descriptor {
    pub domain: Domain,
    pub band: Band,
}

impl Descriptor {
    pub const fn new(domain: Domain, band: Band) -> Self {
        Descriptor { domain, band }
    }

    /// The six combinations of {real_imag, magnitude} x {low, mid, full}.
    pub fn default_selection() -> Vec<Descriptor> {
        let mut out = Vec::with_capacity(6);
        for domain in [Domain::RealImag, Domain::Magnitude] {
            for band in [Band::Low, Band::Mid, Band::Full] {
                out.push(Descriptor { domain, band });
            }
        }
        out
    }

    /// Stable tag such as `real_imag_low`, used in file names and CSV rows.
    pub fn tag(&self) -> String {
        let domain = match self.domain {
            Domain::RealImag => "real_imag",
            Domain::Magnitude => "magnitude",
        };
        let band = match self.band {
            Band::Low => "low",
            Band::Mid => "mid",
            Band::Full => "full",
        };
        format!("{domain}_{band}")
    }
}

impl std::fmt::Display for Descriptor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.tag())
    }
}

impl std::str::FromStr for Descriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Descriptor::default_selection()
            .into_iter()
            .find(|d| d.tag() == s)
            .ok_or_else(|| Error::invalid(format!("unknown feature descriptor {s:?}")))
    }
}

impl From<Descriptor> for String {
    fn from(d: Descriptor) -> String {
        d.tag()
    }
}

impl TryFrom<String> for Descriptor {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Outer radii of the low and mid bands, in normalized radial frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandEdges {
    pub low: f64,
    pub mid: f64,
}

impl Default for BandEdges {
    fn default() -> Self {
        BandEdges { low: 0.125, mid: 0.25 }
    }
}

impl BandEdges {
    pub fn validate(&self) -> Result<()> {
        if !(self.low > 0.0 && self.low < self.mid && self.mid <= 0.5) {
            return Err(Error::invalid(format!(
                "band edges must satisfy 0 < low < mid <= 0.5, got {} / {}",
                self.low, self.mid
            )));
        }
        Ok(())
    }
}

/// Signed frequency of bin `k` of an `n`-point DFT in cycles per sample,
/// folded into `[-1/2, 1/2]`.
fn signed_frequency(k: usize, n: usize) -> f64 {
    if 2 * k <= n {
        k as f64 / n as f64
    } else {
        (k as f64 - n as f64) / n as f64
    }
}

/// Normalized radial frequency of bin `(u, v)`: `sqrt((fu² + fv²) / 2)`, so DC
/// is 0 and the Nyquist corner is exactly 1/2.
pub fn radial_frequency(u: usize, v: usize, width: usize, height: usize) -> f64 {
    let fu = signed_frequency(u, height);
    let fv = signed_frequency(v, width);
    ((fu * fu + fv * fv) / 2.0).sqrt()
}

/// Row-major indices of the bins that fall in `band`.
pub fn band_mask(width: usize, height: usize, band: Band, edges: &BandEdges) -> Vec<usize> {
    // Slack so bins exactly on an edge are not lost to rounding.
    const SLACK: f64 = 1e-12;
    let mut out = Vec::new();
    for u in 0..height {
        for v in 0..width {
            let r = radial_frequency(u, v, width, height);
            let keep = match band {
                Band::Low => r <= edges.low + SLACK,
                Band::Mid => r > edges.low + SLACK && r <= edges.mid + SLACK,
                Band::Full => r <= 0.5 + SLACK,
            };
            if keep {
                out.push(u * width + v);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub descriptor: Descriptor,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Extracts one L2-normalized feature vector.
///
/// `real_imag` concatenates the real parts of the in-band bins followed by their
/// imaginary parts; `magnitude` lists `|F|`. Bins are visited in row-major
/// order.
pub fn extract_features(spec: &Spectrum, descriptor: Descriptor, edges: &BandEdges) -> Result<FeatureVector> {
    edges.validate()?;
    let bins = band_mask(spec.width, spec.height, descriptor.band, edges);
    if bins.is_empty() {
        return Err(Error::Size(format!(
            "{}x{} spectrum has no bins in band {:?}",
            spec.width, spec.height, descriptor.band
        )));
    }
    let mut values = match descriptor.domain {
        Domain::RealImag => bins
            .iter()
            .map(|&i| spec.re[i])
            .chain(bins.iter().map(|&i| spec.im[i]))
            .collect::<Vec<_>>(),
        Domain::Magnitude => bins.iter().map(|&i| spec.re[i].hypot(spec.im[i])).collect(),
    };
    l2_normalize(&mut values);
    Ok(FeatureVector { descriptor, values })
}

/// Transforms `img` once and extracts every requested descriptor, in order.
pub fn feature_sets(img: &Image, selection: &[Descriptor], edges: &BandEdges) -> Result<Vec<FeatureVector>> {
    if selection.is_empty() {
        return Err(Error::invalid("empty feature selection"));
    }
    let spec = dft2(img);
    selection.iter().map(|&d| extract_features(&spec, d, edges)).collect()
}
