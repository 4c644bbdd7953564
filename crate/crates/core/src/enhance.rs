//! Image restoration stage.
//!
//! The built-in enhancer upscales bilinearly and then applies an unsharp mask
//! `out = clamp(in + amount * (in - blur(in)))`. The blur is a separable
//! binomial kernel of `2 * radius + 1` taps (row `2 * radius` of Pascal's
//! triangle), i.e. the discrete Gaussian with variance `radius / 2`. Borders
//! replicate the edge pixel.
//!
//! The external hook hands the image to any command line that reads a PNG at
//! `{in}` and writes a PNG at `{out}`, so a learned restorer can be slotted in.

use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::imgcore::{self, clamp_round, ImageError, RgbImage};

#[derive(Debug, Error)]
pub enum EnhanceError {
    #[error("invalid enhance config: {0}")]
    InvalidConfig(String),
    #[error("external command failed with exit code {0:?}")]
    ProcessFailed(Option<i32>),
    #[error("external command produced no output image at {0}")]
    OutputMissing(PathBuf),
    #[error("external command timed out after {0:?}")]
    Timeout(Duration),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("could not launch external command: {0}")]
    Spawn(std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnhanceMode {
    Builtin,
    External,
    None,
}

impl std::str::FromStr for EnhanceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "builtin" => Ok(Self::Builtin),
            "external" => Ok(Self::External),
            "none" => Ok(Self::None),
            other => Err(format!("unknown enhance mode `{other}` (builtin|external|none)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnhanceConfig {
    pub mode: EnhanceMode,
    pub scale: usize,
    pub sharpen_amount: f64,
    pub sharpen_radius: usize,
    /// Command template with `{in}` / `{out}` placeholders.
    pub external_command: Option<String>,
    pub timeout: Duration,
}

impl Default for EnhanceConfig {
    fn default() -> Self {
        Self {
            mode: EnhanceMode::Builtin,
            scale: 4,
            sharpen_amount: 1.0,
            sharpen_radius: 2,
            external_command: None,
            timeout: Duration::from_secs(120),
        }
    }
}

impl EnhanceConfig {
    pub fn validate(&self) -> Result<(), EnhanceError> {
        if self.scale < 1 {
            return Err(EnhanceError::InvalidConfig("scale must be >= 1".into()));
        }
        if !(self.sharpen_amount >= 0.0) || !self.sharpen_amount.is_finite() {
            return Err(EnhanceError::InvalidConfig("sharpen_amount must be >= 0".into()));
        }
        if self.sharpen_radius < 1 {
            return Err(EnhanceError::InvalidConfig("sharpen_radius must be >= 1".into()));
        }
        if self.mode == EnhanceMode::External && self.external_command.is_none() {
            return Err(EnhanceError::InvalidConfig(
                "external mode requires external_command".into(),
            ));
        }
        Ok(())
    }
}

/// Normalized binomial weights, `2 * radius + 1` taps.
pub fn binomial_kernel(radius: usize) -> Vec<f64> {
    let n = 2 * radius;
    let mut row = vec![1.0f64];
    for _ in 0..n {
        let mut next = vec![1.0; row.len() + 1];
        for i in 1..row.len() {
            next[i] = row[i - 1] + row[i];
        }
        row = next;
    }
    let sum: f64 = row.iter().sum();
    row.iter().map(|v| v / sum).collect()
}

/// Separable blur of one channel plane, edge-replicated, unrounded.
fn blur_plane(plane: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let clampi = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, wk) in kernel.iter().enumerate() {
                let sx = clampi(x as isize + k as isize - r, w);
                acc += wk * plane[y * w + sx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, wk) in kernel.iter().enumerate() {
                let sy = clampi(y as isize + k as isize - r, h);
                acc += wk * tmp[sy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// `clamp(round(in + amount * (in - blur(in))))` per channel.
pub fn unsharp_mask(img: &RgbImage, amount: f64, radius: usize) -> RgbImage {
    let (w, h) = (img.width(), img.height());
    let kernel = binomial_kernel(radius);
    let raw = img.as_raw();
    let mut out = vec![0u8; raw.len()];
    for c in 0..3 {
        let plane: Vec<f64> = raw.iter().skip(c).step_by(3).map(|&v| v as f64).collect();
        let blurred = blur_plane(&plane, w, h, &kernel);
        for (i, (&v, &b)) in plane.iter().zip(&blurred).enumerate() {
            out[i * 3 + c] = clamp_round(v + amount * (v - b));
        }
    }
    RgbImage::from_raw(w, h, out).expect("same dimensions")
}

/// Built-in enhancer: bilinear upscale by `cfg.scale`, then unsharp mask.
pub fn enhance_builtin(img: &RgbImage, cfg: &EnhanceConfig) -> Result<RgbImage, EnhanceError> {
    cfg.validate()?;
    let up = imgcore::resize(img, img.width() * cfg.scale, img.height() * cfg.scale)?;
    if cfg.sharpen_amount == 0.0 {
        return Ok(up);
    }
    Ok(unsharp_mask(&up, cfg.sharpen_amount, cfg.sharpen_radius))
}

/// Splits a command template into argv, honoring single and double quotes,
/// and substitutes `{in}` / `{out}`.
fn expand_command(template: &str, input: &Path, output: &Path) -> Vec<String> {
    let mut args = Vec::new();
    let mut cur = String::new();
    let mut in_arg = false;
    let mut quote: Option<char> = None;
    for ch in template.chars() {
        match (quote, ch) {
            (Some(q), c) if c == q => quote = None,
            (Some(_), c) => cur.push(c),
            (None, '\'' | '"') => {
                quote = Some(ch);
                in_arg = true;
            }
            (None, c) if c.is_whitespace() => {
                if in_arg {
                    args.push(std::mem::take(&mut cur));
                    in_arg = false;
                }
            }
            (None, c) => {
                cur.push(c);
                in_arg = true;
            }
        }
    }
    if in_arg {
        args.push(cur);
    }
    let (i, o) = (input.display().to_string(), output.display().to_string());
    args.into_iter()
        .map(|a| a.replace("{in}", &i).replace("{out}", &o))
        .collect()
}

/// Runs the external restorer. Calls sharing a `workdir` must not overlap.
pub fn enhance_external(
    img: &RgbImage,
    cfg: &EnhanceConfig,
    workdir: &Path,
) -> Result<RgbImage, EnhanceError> {
    cfg.validate()?;
    let template = cfg
        .external_command
        .as_deref()
        .ok_or_else(|| EnhanceError::InvalidConfig("missing external_command".into()))?;
    let input = workdir.join("in.png");
    let output = workdir.join("out.png");
    if output.exists() {
        std::fs::remove_file(&output).map_err(ImageError::from)?;
    }
    imgcore::save_image(img, &input)?;
    let argv = expand_command(template, &input, &output);
    let Some((program, rest)) = argv.split_first() else {
        return Err(EnhanceError::InvalidConfig("empty external_command".into()));
    };
    let mut child = Command::new(program)
        .args(rest)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .spawn()
        .map_err(EnhanceError::Spawn)?;
    let started = Instant::now();
    let status = loop {
        if let Some(status) = child.try_wait().map_err(EnhanceError::Spawn)? {
            break status;
        }
        if started.elapsed() >= cfg.timeout {
            let _ = child.kill();
            let _ = child.wait();
            return Err(EnhanceError::Timeout(cfg.timeout));
        }
        std::thread::sleep(Duration::from_millis(10));
    };
    if !status.success() {
        return Err(EnhanceError::ProcessFailed(status.code()));
    }
    if !output.exists() {
        return Err(EnhanceError::OutputMissing(output));
    }
    Ok(imgcore::load_image(&output)?)
}

/// Dispatches on `cfg.mode`; `none` is the identity.
pub fn enhance(img: &RgbImage, cfg: &EnhanceConfig, workdir: &Path) -> Result<RgbImage, EnhanceError> {
    match cfg.mode {
        EnhanceMode::Builtin => enhance_builtin(img, cfg),
        EnhanceMode::External => enhance_external(img, cfg, workdir),
        EnhanceMode::None => Ok(img.clone()),
    }
}
