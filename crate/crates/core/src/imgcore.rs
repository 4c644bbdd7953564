//! Raster image types, codecs, resizing and color conversion.
//!
//! Three concrete rasters flow through the pipeline: [`RgbImage`] (8-bit
//! interleaved R,G,B), [`GrayImage`] (8-bit intensity) and [`BinaryImage`]
//! (boolean mask, `true` = foreground). All are row-major.
//!
//! Codecs: PNG (8-bit gray/RGB/RGBA) and binary Netpbm P5/P6 with maxval 255.
//! Any value produced from floating-point arithmetic is rounded half away
//! from zero (`f64::round`).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image data: {0}")]
    CorruptData(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("image dimensions must be at least 1x1, got {0}x{1}")]
    ZeroDimension(usize, usize),
    #[error("buffer length {got} does not match {width}x{height}x{channels}")]
    BadBufferLength {
        width: usize,
        height: usize,
        channels: usize,
        got: usize,
    },
}

fn check_len(width: usize, height: usize, channels: usize, got: usize) -> Result<(), ImageError> {
    if width == 0 || height == 0 {
        return Err(ImageError::ZeroDimension(width, height));
    }
    if width * height * channels != got {
        return Err(ImageError::BadBufferLength {
            width,
            height,
            channels,
            got,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, [0, 0, 0])
    }

    pub fn filled(width: usize, height: usize, color: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be non-zero");
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&color);
        }
        Self { width, height, data }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        check_len(width, height, 3, data.len())?;
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: usize, y: usize, px: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&px);
    }

    /// Copies the `w`×`h` region whose top-left corner is `(x, y)`.
    /// The region must lie inside the image.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> RgbImage {
        assert!(x + w <= self.width && y + h <= self.height && w > 0 && h > 0);
        let mut data = Vec::with_capacity(w * h * 3);
        for row in y..y + h {
            let start = (row * self.width + x) * 3;
            data.extend_from_slice(&self.data[start..start + w * 3]);
        }
        RgbImage {
            width: w,
            height: h,
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0)
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be non-zero");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        check_len(width, height, 1, data.len())?;
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn put(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    /// Replicates the intensity into three channels.
    pub fn to_rgb(&self) -> RgbImage {
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        RgbImage {
            width: self.width,
            height: self.height,
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryImage {
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be non-zero");
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<bool>) -> Result<Self, ImageError> {
        check_len(width, height, 1, data.len())?;
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_raw(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn put(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count_foreground(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn inverted(&self) -> BinaryImage {
        BinaryImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| !v).collect(),
        }
    }

    /// Foreground encodes as 255, background as 0.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| if v { 255 } else { 0 }).collect(),
        }
    }
}

/// Any raster that can be written by [`save_image`].
pub enum ImageRef<'a> {
    Rgb(&'a RgbImage),
    Gray(&'a GrayImage),
    Binary(&'a BinaryImage),
}

impl<'a> From<&'a RgbImage> for ImageRef<'a> {
    fn from(img: &'a RgbImage) -> Self {
        ImageRef::Rgb(img)
    }
}

impl<'a> From<&'a GrayImage> for ImageRef<'a> {
    fn from(img: &'a GrayImage) -> Self {
        ImageRef::Gray(img)
    }
}

impl<'a> From<&'a BinaryImage> for ImageRef<'a> {
    fn from(img: &'a BinaryImage) -> Self {
        ImageRef::Binary(img)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Png,
    Ppm,
    Pgm,
}

fn format_from_extension(path: &Path) -> Result<Format, ImageError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "png" => Ok(Format::Png),
        "ppm" => Ok(Format::Ppm),
        "pgm" => Ok(Format::Pgm),
        _ => Err(ImageError::UnsupportedFormat(path.display().to_string())),
    }
}

/// Decodes a PNG, PPM (P6) or PGM (P5) file. The format is sniffed from the
/// file contents, not the extension. Gray sources are expanded to RGB.
pub fn load_image(path: impl AsRef<Path>) -> Result<RgbImage, ImageError> {
    let path = path.as_ref();
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(ImageError::FileNotFound(path.display().to_string()))
        }
        Err(e) => return Err(e.into()),
    };
    decode_image(&bytes)
}

pub fn decode_image(bytes: &[u8]) -> Result<RgbImage, ImageError> {
    if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        decode_png(bytes)
    } else if bytes.starts_with(b"P6") || bytes.starts_with(b"P5") {
        decode_netpbm(bytes)
    } else {
        Err(ImageError::UnsupportedFormat(
            "unrecognized file signature".into(),
        ))
    }
}

fn decode_png(bytes: &[u8]) -> Result<RgbImage, ImageError> {
    let mut decoder = png::Decoder::new(bytes);
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder
        .read_info()
        .map_err(|e| ImageError::CorruptData(e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| ImageError::CorruptData(e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let buf = &buf[..info.buffer_size()];
    let data: Vec<u8> = match info.color_type {
        png::ColorType::Rgb => buf.to_vec(),
        png::ColorType::Rgba => buf.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        png::ColorType::Grayscale => buf.iter().flat_map(|&v| [v, v, v]).collect(),
        png::ColorType::GrayscaleAlpha => buf.chunks_exact(2).flat_map(|p| [p[0], p[0], p[0]]).collect(),
        png::ColorType::Indexed => {
            return Err(ImageError::UnsupportedFormat("unexpanded indexed PNG".into()))
        }
    };
    RgbImage::from_raw(w, h, data).map_err(|e| ImageError::CorruptData(e.to_string()))
}

/// Reads whitespace/comment separated header tokens of a Netpbm file.
struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn next_token(&mut self) -> Result<usize, ImageError> {
        loop {
            match self.bytes.get(self.pos) {
                Some(b'#') => {
                    while let Some(&c) = self.bytes.get(self.pos) {
                        self.pos += 1;
                        if c == b'\n' || c == b'\r' {
                            break;
                        }
                    }
                }
                Some(c) if c.is_ascii_whitespace() => self.pos += 1,
                Some(_) => break,
                None => return Err(ImageError::CorruptData("truncated header".into())),
            }
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ImageError::CorruptData("bad header token".into()))
    }
}

fn decode_netpbm(bytes: &[u8]) -> Result<RgbImage, ImageError> {
    let channels = if bytes[1] == b'6' { 3 } else { 1 };
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let w = cur.next_token()?;
    let h = cur.next_token()?;
    let maxval = cur.next_token()?;
    if maxval != 255 {
        return Err(ImageError::UnsupportedFormat(format!(
            "netpbm maxval {maxval} (only 255 supported)"
        )));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(cur.pos) {
        Some(c) if c.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(ImageError::CorruptData("missing raster separator".into())),
    }
    if w == 0 || h == 0 {
        return Err(ImageError::CorruptData(format!("zero dimension {w}x{h}")));
    }
    let need = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| ImageError::CorruptData("dimensions overflow".into()))?;
    let raster = &bytes[cur.pos..];
    if raster.len() < need {
        return Err(ImageError::CorruptData(format!(
            "raster has {} bytes, expected {need}",
            raster.len()
        )));
    }
    let raster = &raster[..need];
    let data = if channels == 3 {
        raster.to_vec()
    } else {
        raster.iter().flat_map(|&v| [v, v, v]).collect()
    };
    Ok(RgbImage {
        width: w,
        height: h,
        data,
    })
}

/// Writes `img` in the format implied by the extension (`.png`, `.ppm`,
/// `.pgm`). PPM output of a gray/binary image replicates channels; PGM
/// output of an RGB image stores its luma.
pub fn save_image<'a>(img: impl Into<ImageRef<'a>>, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let path = path.as_ref();
    let format = format_from_extension(path)?;
    let img = img.into();
    let (w, h, channels, data): (usize, usize, usize, std::borrow::Cow<[u8]>) = match (&img, format) {
        (ImageRef::Rgb(i), Format::Pgm) => {
            let g = to_grayscale(i);
            (g.width, g.height, 1, g.data.into())
        }
        (ImageRef::Rgb(i), _) => (i.width, i.height, 3, i.data.as_slice().into()),
        (ImageRef::Gray(i), Format::Ppm) => (i.width, i.height, 3, i.to_rgb().data.into()),
        (ImageRef::Gray(i), _) => (i.width, i.height, 1, i.data.as_slice().into()),
        (ImageRef::Binary(i), Format::Ppm) => {
            (i.width, i.height, 3, i.to_gray().to_rgb().data.into())
        }
        (ImageRef::Binary(i), _) => (i.width, i.height, 1, i.to_gray().data.into()),
    };
    let file = File::create(path)?;
    let mut out = BufWriter::new(file);
    match format {
        Format::Png => {
            let mut enc = png::Encoder::new(&mut out, w as u32, h as u32);
            enc.set_color(if channels == 3 {
                png::ColorType::Rgb
            } else {
                png::ColorType::Grayscale
            });
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc
                .write_header()
                .map_err(|e| ImageError::Io(std::io::Error::other(e)))?;
            writer
                .write_image_data(&data)
                .map_err(|e| ImageError::Io(std::io::Error::other(e)))?;
            writer
                .finish()
                .map_err(|e| ImageError::Io(std::io::Error::other(e)))?;
        }
        Format::Ppm | Format::Pgm => {
            let magic = if channels == 3 { "P6" } else { "P5" };
            write!(out, "{magic}\n{w} {h}\n255\n")?;
            out.write_all(&data)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads a whole file, used by callers that want the raw bytes of a
/// stored image (e.g. checksum comparisons).
pub fn read_bytes(path: impl AsRef<Path>) -> Result<Vec<u8>, ImageError> {
    let mut buf = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut buf)?;
    Ok(buf)
}

#[inline]
pub(crate) fn clamp_round(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Source coordinate and blend weight for one output sample, using
/// pixel-center alignment clamped to the valid range.
fn bilinear_taps(out_len: usize, in_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(in_len - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

/// Bilinear resize with pixel-center alignment.
pub fn resize(img: &RgbImage, out_w: usize, out_h: usize) -> Result<RgbImage, ImageError> {
    if out_w == 0 || out_h == 0 {
        return Err(ImageError::ZeroDimension(out_w, out_h));
    }
    if out_w == img.width && out_h == img.height {
        return Ok(img.clone());
    }
    let xs = bilinear_taps(out_w, img.width);
    let ys = bilinear_taps(out_h, img.height);
    let mut out = RgbImage::new(out_w, out_h);
    for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
        for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
            let p00 = img.get(x0, y0);
            let p10 = img.get(x1, y0);
            let p01 = img.get(x0, y1);
            let p11 = img.get(x1, y1);
            let mut px = [0u8; 3];
            for c in 0..3 {
                let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
                let bottom = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
                px[c] = clamp_round(top * (1.0 - fy) + bottom * fy);
            }
            out.put(ox, oy, px);
        }
    }
    Ok(out)
}

/// BT.601 luma: `round(0.299 R + 0.587 G + 0.114 B)`.
pub fn to_grayscale(img: &RgbImage) -> GrayImage {
    let data = img
        .data
        .chunks_exact(3)
        .map(|p| clamp_round(0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64))
        .collect();
    GrayImage {
        width: img.width,
        height: img.height,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rgb(rng: &mut ChaCha8Rng, w: usize, h: usize) -> RgbImage {
        let data = (0..w * h * 3).map(|_| rng.gen()).collect();
        RgbImage::from_raw(w, h, data).unwrap()
    }

    #[test]
    fn decodes_one_pixel_ppm() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("one.ppm");
        std::fs::write(&p, b"P6\n1 1\n255\n\x80\x80\x80").unwrap();
        let img = load_image(&p).unwrap();
        assert_eq!(img, RgbImage::from_raw(1, 1, vec![128, 128, 128]).unwrap());
    }

    #[test]
    fn netpbm_header_comments_are_skipped() {
        let img = decode_image(b"P5 # comment\n2 # w\n1\n255\n\x00\xff").unwrap();
        assert_eq!(img.as_raw(), &[0, 0, 0, 255, 255, 255]);
    }

    #[test]
    fn missing_file_is_reported() {
        match load_image("/definitely/not/here.png") {
            Err(ImageError::FileNotFound(_)) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_signature_is_unsupported() {
        assert!(matches!(
            decode_image(b"GIF89a...."),
            Err(ImageError::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn truncated_raster_is_corrupt() {
        assert!(matches!(
            decode_image(b"P6\n2 2\n255\n\x00\x01"),
            Err(ImageError::CorruptData(_))
        ));
    }

    #[test]
    fn lossless_round_trip_all_formats() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let img = random_rgb(&mut rng, 8, 8);
        let dir = tempfile::tempdir().unwrap();
        for name in ["a.png", "a.ppm"] {
            let p = dir.path().join(name);
            save_image(&img, &p).unwrap();
            assert_eq!(load_image(&p).unwrap(), img, "{name}");
        }
        let gray = to_grayscale(&img);
        for name in ["g.png", "g.pgm"] {
            let p = dir.path().join(name);
            save_image(&gray, &p).unwrap();
            assert_eq!(load_image(&p).unwrap(), gray.to_rgb(), "{name}");
        }
    }

    #[test]
    fn ppm_bytes_are_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.ppm");
        let img = RgbImage::from_raw(2, 1, vec![1, 2, 3, 4, 5, 6]).unwrap();
        save_image(&img, &p).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"P6\n2 1\n255\n\x01\x02\x03\x04\x05\x06");
    }

    #[test]
    fn binary_saves_as_0_255() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.pgm");
        let b = BinaryImage::from_raw(3, 1, vec![true, false, true]).unwrap();
        save_image(&b, &p).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"P5\n3 1\n255\n\xff\x00\xff");
        let png_path = dir.path().join("b.png");
        save_image(&b, &png_path).unwrap();
        assert_eq!(load_image(&png_path).unwrap().as_raw(), &[255, 255, 255, 0, 0, 0, 255, 255, 255]);
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let img = RgbImage::new(1, 1);
        assert!(matches!(
            save_image(&img, "/nonexistent-dir/sub/x.png"),
            Err(ImageError::Io(_))
        ));
    }

    #[test]
    fn resize_identity_and_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = random_rgb(&mut rng, 32, 32);
        assert_eq!(resize(&img, 32, 32).unwrap(), img);
        assert!(matches!(resize(&img, 0, 4), Err(ImageError::ZeroDimension(0, 4))));
    }

    #[test]
    fn resize_constant_stays_constant() {
        let img = RgbImage::filled(5, 3, [12, 200, 77]);
        let out = resize(&img, 17, 9).unwrap();
        assert!(out.as_raw().chunks(3).all(|p| p == [12, 200, 77]));
    }

    /// Evaluates bilinear interpolation at one target pixel straight from the
    /// definition: the source position is `(d + 0.5) * in/out - 0.5`, clamped,
    /// and the four surrounding samples are blended by area.
    fn bilinear_oracle(src: &[[f64; 2]; 2], out: usize, ox: usize, oy: usize) -> f64 {
        let pos = |d: usize| ((d as f64 + 0.5) * 2.0 / out as f64 - 0.5).clamp(0.0, 1.0);
        let (sx, sy) = (pos(ox), pos(oy));
        src[0][0] * (1.0 - sx) * (1.0 - sy)
            + src[0][1] * sx * (1.0 - sy)
            + src[1][0] * (1.0 - sx) * sy
            + src[1][1] * sx * sy
    }

    #[test]
    fn resize_checkerboard_matches_oracle() {
        let board = [[0.0, 255.0], [255.0, 0.0]];
        let mut img = RgbImage::new(2, 2);
        for y in 0..2 {
            for x in 0..2 {
                let v = board[y][x] as u8;
                img.put(x, y, [v, v, v]);
            }
        }
        let out = resize(&img, 4, 4).unwrap();
        // Frozen from the oracle: rows are
        // [0 64 191 255], [64 96 159 191], [191 159 96 64], [255 191 64 0].
        let frozen = [
            [0, 64, 191, 255],
            [64, 96, 159, 191],
            [191, 159, 96, 64],
            [255, 191, 64, 0],
        ];
        for y in 0..4 {
            for x in 0..4 {
                let want = bilinear_oracle(&board, 4, x, y).round() as u8;
                assert_eq!(want, frozen[y][x]);
                assert_eq!(out.get(x, y), [want; 3], "({x},{y})");
            }
        }
    }

    #[test]
    fn grayscale_examples() {
        let img = RgbImage::from_raw(2, 1, vec![128, 128, 128, 255, 0, 0]).unwrap();
        assert_eq!(to_grayscale(&img).as_raw(), &[128, 76]);
    }

    #[test]
    fn grayscale_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = random_rgb(&mut rng, 16, 16);
        let g = to_grayscale(&img);
        for y in 0..16 {
            for x in 0..16 {
                let [r, gg, b] = img.get(x, y);
                let v = (r as f64 * 0.299 + gg as f64 * 0.587 + b as f64 * 0.114).round();
                assert_eq!(g.get(x, y) as f64, v.clamp(0.0, 255.0));
            }
        }
    }

    proptest! {
        #[test]
        fn grayscale_reexpansion_is_idempotent(data in proptest::collection::vec(any::<u8>(), 3 * 12)) {
            let img = RgbImage::from_raw(4, 3, data).unwrap();
            let once = to_grayscale(&img);
            prop_assert_eq!(to_grayscale(&once.to_rgb()), once);
        }

        #[test]
        fn resize_preserves_value_range(
            data in proptest::collection::vec(any::<u8>(), 3 * 20),
            w in 1usize..12, h in 1usize..12,
        ) {
            let img = RgbImage::from_raw(5, 4, data).unwrap();
            let out = resize(&img, w, h).unwrap();
            prop_assert_eq!((out.width(), out.height()), (w, h));
            let (lo, hi) = (img.as_raw().iter().min().unwrap(), img.as_raw().iter().max().unwrap());
            prop_assert!(out.as_raw().iter().all(|v| v >= lo && v <= hi));
        }
    }
}
