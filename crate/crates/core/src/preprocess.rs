//! Binarization and morphology.

use thiserror::Error;

use crate::imgcore::{clamp_round, BinaryImage, GrayImage};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PreprocessError {
    #[error("image has a single intensity value ({0}); no threshold separates it")]
    ConstantImage(u8),
    #[error("invalid percentiles: need 0 <= low < high <= 100, got {0} and {1}")]
    InvalidPercentiles(String, String),
    #[error("dimension mismatch: mask {0}x{1}, image {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("invalid structuring element: {0}")]
    InvalidStructuringElement(String),
}

/// Boolean neighborhood with odd sides, anchored at its center cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuringElement {
    width: usize,
    height: usize,
    mask: Vec<bool>,
}

impl StructuringElement {
    pub fn new(width: usize, height: usize, mask: Vec<bool>) -> Result<Self, PreprocessError> {
        if width % 2 == 0 || height % 2 == 0 {
            return Err(PreprocessError::InvalidStructuringElement(format!(
                "sides must be odd, got {width}x{height}"
            )));
        }
        if mask.len() != width * height {
            return Err(PreprocessError::InvalidStructuringElement(
                "mask length does not match size".into(),
            ));
        }
        if !mask.iter().any(|&m| m) {
            return Err(PreprocessError::InvalidStructuringElement(
                "mask has no set cell".into(),
            ));
        }
        Ok(Self { width, height, mask })
    }

    /// Full rectangle.
    pub fn rect(width: usize, height: usize) -> Result<Self, PreprocessError> {
        Self::new(width, height, vec![true; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn anchor(&self) -> (usize, usize) {
        ((self.width - 1) / 2, (self.height - 1) / 2)
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    /// Offsets `(dx, dy)` of set cells relative to the anchor.
    pub fn offsets(&self) -> Vec<(isize, isize)> {
        let (ax, ay) = self.anchor();
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    out.push((x as isize - ax as isize, y as isize - ay as isize));
                }
            }
        }
        out
    }
}

impl Default for StructuringElement {
    fn default() -> Self {
        Self::rect(3, 3).expect("3x3 is valid")
    }
}

fn histogram(img: &GrayImage) -> [u64; 256] {
    let mut hist = [0u64; 256];
    for &v in img.as_raw() {
        hist[v as usize] += 1;
    }
    hist
}

/// `a * b` as a 256-bit value (hi, lo) for an unsigned 128-bit `a` and 64-bit `b`.
fn widening_mul(a: u128, b: u64) -> (u128, u128) {
    let (a_hi, a_lo) = (a >> 64, a & u64::MAX as u128);
    let b = b as u128;
    let lo = a_lo * b;
    let mid = a_hi * b + (lo >> 64);
    (mid >> 64, (mid << 64) | (lo & u64::MAX as u128))
}

/// Otsu's threshold. For each candidate `t` in `0..=254`, class 0 holds
/// pixels `<= t` and class 1 the rest. The between-class variance is
/// proportional to `(s0*n1 - s1*n0)^2 / (n0*n1)` (counts `n`, intensity
/// sums `s`), which is compared exactly in integer arithmetic; ties keep
/// the smallest `t`.
pub fn otsu_threshold(img: &GrayImage) -> Result<u8, PreprocessError> {
    let hist = histogram(img);
    let distinct = hist.iter().filter(|&&c| c > 0).count();
    if distinct < 2 {
        return Err(PreprocessError::ConstantImage(img.as_raw()[0]));
    }
    let total_n: u64 = hist.iter().sum();
    let total_s: u64 = hist.iter().enumerate().map(|(i, &c)| i as u64 * c).sum();

    // Best candidate kept as the fraction num/den; den == 0 means "none yet".
    let mut best_t = 0u8;
    let (mut best_num, mut best_den) = (0u128, 0u64);
    let (mut n0, mut s0) = (0u64, 0u64);
    for t in 0..255usize {
        n0 += hist[t];
        s0 += t as u64 * hist[t];
        let n1 = total_n - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let s1 = total_s - s0;
        let diff = (s0 as i128 * n1 as i128 - s1 as i128 * n0 as i128).unsigned_abs();
        let num = diff * diff;
        let den = n0 * n1;
        let better = best_den == 0 || widening_mul(num, best_den) > widening_mul(best_num, den);
        if better {
            best_t = t as u8;
            best_num = num;
            best_den = den;
        }
    }
    Ok(best_t)
}

/// Foreground where `pixel > t`.
pub fn binarize(img: &GrayImage, t: u8) -> BinaryImage {
    let data = img.as_raw().iter().map(|&v| v > t).collect();
    BinaryImage::from_raw(img.width(), img.height(), data).expect("same dimensions")
}

/// Nearest-rank percentile of the intensity histogram; `pct = 0` is the minimum.
pub fn percentile(img: &GrayImage, pct: f64) -> u8 {
    let hist = histogram(img);
    let n = img.as_raw().len() as u64;
    let rank = ((pct / 100.0 * n as f64).ceil() as u64).clamp(1, n);
    let mut seen = 0u64;
    for (v, &c) in hist.iter().enumerate() {
        seen += c;
        if seen >= rank {
            return v as u8;
        }
    }
    255
}

/// Linear stretch mapping the `low_pct` percentile to 0 and `high_pct` to 255.
pub fn stretch_contrast(img: &GrayImage, low_pct: f64, high_pct: f64) -> Result<GrayImage, PreprocessError> {
    if !(0.0..=100.0).contains(&low_pct) || !(0.0..=100.0).contains(&high_pct) || low_pct >= high_pct {
        return Err(PreprocessError::InvalidPercentiles(
            low_pct.to_string(),
            high_pct.to_string(),
        ));
    }
    let lo = percentile(img, low_pct) as f64;
    let hi = percentile(img, high_pct) as f64;
    if hi == lo {
        return Ok(img.clone());
    }
    let data = img
        .as_raw()
        .iter()
        .map(|&v| clamp_round(255.0 * (v as f64 - lo) / (hi - lo)))
        .collect();
    Ok(GrayImage::from_raw(img.width(), img.height(), data).expect("same dimensions"))
}

/// Binary dilation: `out(x, y)` is set iff some set cell of the structuring
/// element at offset `d` has `img(p - d)` in the foreground (i.e. the
/// reflected element placed at `p` hits the foreground). Pixels outside
/// the image are background.
pub fn dilate(img: &BinaryImage, se: &StructuringElement) -> BinaryImage {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let offsets = se.offsets();
    let src = img.as_raw();
    let mut out = vec![false; src.len()];
    // Scatter each foreground pixel forward by every offset.
    for y in 0..h {
        for x in 0..w {
            if !src[(y * w + x) as usize] {
                continue;
            }
            for &(dx, dy) in &offsets {
                let (tx, ty) = (x + dx, y + dy);
                if tx >= 0 && ty >= 0 && tx < w && ty < h {
                    out[(ty * w + tx) as usize] = true;
                }
            }
        }
    }
    BinaryImage::from_raw(img.width(), img.height(), out).expect("same dimensions")
}

pub fn dilate_n(img: &BinaryImage, se: &StructuringElement, iterations: usize) -> BinaryImage {
    let mut cur = img.clone();
    for _ in 0..iterations {
        cur = dilate(&cur, se);
    }
    cur
}

/// Keeps `img` where `mask` is foreground, zero elsewhere.
pub fn mask_multiply(mask: &BinaryImage, img: &GrayImage) -> Result<GrayImage, PreprocessError> {
    if mask.width() != img.width() || mask.height() != img.height() {
        return Err(PreprocessError::DimensionMismatch(
            mask.width(),
            mask.height(),
            img.width(),
            img.height(),
        ));
    }
    let data = mask
        .as_raw()
        .iter()
        .zip(img.as_raw())
        .map(|(&m, &v)| if m { v } else { 0 })
        .collect();
    Ok(GrayImage::from_raw(img.width(), img.height(), data).expect("same dimensions"))
}
