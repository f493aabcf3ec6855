//! Grayscale rasters, binary PGM I/O and resampling.

use crate::error::{Error, Result};

/// Dense grayscale raster, row-major.
///
/// Values loaded from disk are in `[0, 1]`; intermediate pipeline images may
/// leave that range but are always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Size(format!("{width}x{height} image")));
        }
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                found: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite pixel at index {i}")));
        }
        Ok(Image { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Image::new(width, height, vec![value; width * height])
    }

    /// Builds an image from `f(row, col)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Image::new(width, height, data)
    }

    /// Constructor for buffers the crate has produced itself and knows to be
    /// finite and correctly sized.
    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Image { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// Pixel lookup with replicate-edge extension.
    #[inline]
    pub fn get_clamped(&self, row: isize, col: isize) -> f64 {
        let r = row.clamp(0, self.height as isize - 1) as usize;
        let c = col.clamp(0, self.width as isize - 1) as usize;
        self.data[r * self.width + c]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Image> {
        Image::new(self.width, self.height, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn scale(&self, c: f64) -> Result<Image> {
        self.map(|v| c * v)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Largest absolute pixel difference; images must have equal dimensions.
    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        assert_eq!((self.width, self.height), (other.width, other.height));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Mean absolute pixel difference; images must have equal dimensions.
    pub fn mean_abs_diff(&self, other: &Image) -> f64 {
        assert_eq!((self.width, self.height), (other.width, other.height));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / self.data.len() as f64
    }
}

fn is_pgm_space(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c)
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderReader<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if is_pgm_space(b) {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    /// Returns the parsed value and its starting offset.
    fn read_uint(&mut self, what: &str) -> Result<(usize, usize)> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(Error::format(start, format!("expected {what}")));
        }
        if self.pos < self.bytes.len() && !is_pgm_space(self.bytes[self.pos]) && self.bytes[self.pos] != b'#' {
            return Err(Error::format(self.pos, format!("unexpected byte after {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .map(|v| (v, start))
            .ok_or_else(|| Error::format(start, format!("{what} out of range")))
    }
}

/// Decodes a binary (P5) PGM with `maxval <= 255`.
///
/// Pixel values are scaled by `1 / maxval`, so the common `maxval = 255` case
/// yields exactly `raw / 255`.
pub fn load_pgm(bytes: &[u8]) -> Result<Image> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::format(0, "malformed magic (expected \"P5\")"));
    }
    let mut rd = HeaderReader { bytes, pos: 2 };
    if rd.pos < bytes.len() && !is_pgm_space(bytes[rd.pos]) && bytes[rd.pos] != b'#' {
        return Err(Error::format(2, "malformed magic (expected \"P5\")"));
    }
    let (width, _) = rd.read_uint("width")?;
    let (height, _) = rd.read_uint("height")?;
    let (maxval, maxval_at) = rd.read_uint("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::format(
            maxval_at,
            format!("zero image dimension {width}x{height}"),
        ));
    }
    if !(1..=255).contains(&maxval) {
        return Err(Error::format(maxval_at, format!("maxval {maxval} outside [1, 255]")));
    }
    // Exactly one whitespace byte separates the header from the payload.
    if rd.pos >= bytes.len() {
        return Err(Error::format(rd.pos, "truncated pixel payload"));
    }
    if !is_pgm_space(bytes[rd.pos]) {
        return Err(Error::format(rd.pos, "expected whitespace after maxval"));
    }
    let payload_start = rd.pos + 1;
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::format(maxval_at, "image dimensions overflow"))?;
    let end = payload_start
        .checked_add(n)
        .ok_or_else(|| Error::format(payload_start, "image dimensions overflow"))?;
    if bytes.len() < end {
        return Err(Error::format(bytes.len(), "truncated pixel payload"));
    }
    let scale = maxval as f64;
    let mut data = Vec::with_capacity(n);
    for (i, &b) in bytes[payload_start..end].iter().enumerate() {
        if b as usize > maxval {
            return Err(Error::format(
                payload_start + i,
                format!("pixel {b} exceeds maxval {maxval}"),
            ));
        }
        data.push(b as f64 / scale);
    }
    Ok(Image::from_raw(width, height, data))
}

/// Quantizes a value to an 8-bit level: clamp to `[0, 1]`, then `round(v * 255)`.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encodes an image as binary PGM with `maxval = 255`.
pub fn save_pgm(img: &Image) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", img.width, img.height);
    let mut out = Vec::with_capacity(header.len() + img.len());
    out.extend_from_slice(header.as_bytes());
    out.extend(img.data.iter().map(|&v| quantize(v)));
    out
}

/// Axis-aligned rectangle in source pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub fn full(img: &Image) -> Rect {
        Rect {
            x: 0,
            y: 0,
            width: img.width,
            height: img.height,
        }
    }
}

/// Crops `crop` out of `img` and resamples it to `out_w x out_h` with bilinear
/// interpolation.
///
/// Pixel centers are aligned: output pixel `o` samples source coordinate
/// `(o + 0.5) * in / out - 0.5`, clamped to the crop, so an identity resize is
/// exact.
pub fn crop_resize(img: &Image, crop: Rect, out_w: usize, out_h: usize) -> Result<Image> {
    if crop.width == 0 || crop.height == 0 || out_w == 0 || out_h == 0 {
        return Err(Error::Bounds(format!(
            "empty crop {}x{} or output {out_w}x{out_h}",
            crop.width, crop.height
        )));
    }
    if crop.x + crop.width > img.width || crop.y + crop.height > img.height {
        return Err(Error::Bounds(format!(
            "crop {}x{}+{}+{} outside {}x{} image",
            crop.width, crop.height, crop.x, crop.y, img.width, img.height
        )));
    }

    // (base index, next index, fractional weight of next) per output coordinate.
    let taps = |out: usize, len: usize, origin: usize| -> Vec<(usize, usize, f64)> {
        let ratio = len as f64 / out as f64;
        (0..out)
            .map(|o| {
                let s = ((o as f64 + 0.5) * ratio - 0.5).clamp(0.0, (len - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(len - 1);
                (origin + i0, origin + i1, s - i0 as f64)
            })
            .collect()
    };
    let xs = taps(out_w, crop.width, crop.x);
    let ys = taps(out_h, crop.height, crop.y);

    let mut data = Vec::with_capacity(out_w * out_h);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = img.get(y0, x0) * (1.0 - fx) + img.get(y0, x1) * fx;
            let bottom = img.get(y1, x0) * (1.0 - fx) + img.get(y1, x1) * fx;
            data.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    Ok(Image::from_raw(out_w, out_h, data))
}
