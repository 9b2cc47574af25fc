//! In-memory rasters plus binary PGM/PPM codecs, luma conversion, bilinear
//! resampling and image pyramids.
//!
//! Pixels are stored as `f64` luminance in `[0, 255]`. Quantization to bytes
//! only happens in [`encode_image`].

use std::fmt;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ImageError {
    #[error("unsupported magic number {0:?} (expected P5 or P6)")]
    UnsupportedMagic(String),
    #[error("malformed header: {0}")]
    MalformedHeader(&'static str),
    #[error("invalid dimensions {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },
    #[error("unsupported maxval {0} (only 255 is accepted)")]
    UnsupportedMaxval(u32),
    #[error("truncated pixel payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("pixel buffer has {found} values, expected {expected}")]
    BufferSize { expected: usize, found: usize },
    #[error("pixel value {0} outside [0, 255]")]
    PixelRange(f64),
    #[error("target dimensions must be positive, got {width}x{height}")]
    ZeroTarget { width: usize, height: usize },
    #[error("pyramid scale step must be > 1, got {0}")]
    ScaleStep(f64),
    #[error("minimum side {min_side} exceeds image {width}x{height}")]
    MinSideTooLarge {
        min_side: usize,
        width: usize,
        height: usize,
    },
    #[error("crop {x},{y} {width}x{height} lies outside the image")]
    CropOutside {
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

/// Single-channel raster, row-major.
#[derive(Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GrayImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::InvalidDimensions { width, height });
        }
        if data.len() != width * height {
            return Err(ImageError::BufferSize {
                expected: width * height,
                found: data.len(),
            });
        }
        if let Some(&bad) = data
            .iter()
            .find(|v| !v.is_finite() || **v < 0.0 || **v > 255.0)
        {
            return Err(ImageError::PixelRange(bad));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Image of constant value. Panics on zero dimensions or out-of-range value.
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self::new(width, height, vec![value; width * height]).expect("valid constant image")
    }

    /// Builds an image from a per-pixel function; values are clamped into `[0, 255]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                data.push(if v.is_nan() { 0.0 } else { v.clamp(0.0, 255.0) });
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Pixel lookup with coordinates clamped to the image (replicate border).
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.get(cx, cy)
    }

    pub fn crop(&self, x: usize, y: usize, width: usize, height: usize) -> Result<Self, ImageError> {
        if width == 0 || height == 0 || x + width > self.width || y + height > self.height {
            return Err(ImageError::CropOutside {
                x,
                y,
                width,
                height,
            });
        }
        let mut data = Vec::with_capacity(width * height);
        for row in y..y + height {
            let start = row * self.width + x;
            data.extend_from_slice(&self.data[start..start + width]);
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Applies `f` to every pixel, clamping the result into `[0, 255]`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v).clamp(0.0, 255.0)).collect(),
        }
    }
}

#[derive(Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<[f64; 3]>,
}

impl fmt::Debug for RgbImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RgbImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<[f64; 3]>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::InvalidDimensions { width, height });
        }
        if data.len() != width * height {
            return Err(ImageError::BufferSize {
                expected: 3 * width * height,
                found: 3 * data.len(),
            });
        }
        if let Some(&bad) = data
            .iter()
            .flatten()
            .find(|v| !v.is_finite() || **v < 0.0 || **v > 255.0)
        {
            return Err(ImageError::PixelRange(bad));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.data
    }
}

/// Result of [`decode_image`]: PGM yields gray, PPM yields RGB.
#[derive(Debug, Clone, PartialEq)]
pub enum DecodedImage {
    Gray(GrayImage),
    Rgb(RgbImage),
}

impl DecodedImage {
    pub fn into_gray(self) -> GrayImage {
        match self {
            DecodedImage::Gray(g) => g,
            DecodedImage::Rgb(rgb) => to_grayscale(&rgb),
        }
    }
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderReader<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
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

    fn number(&mut self, what: &'static str) -> Result<u64, ImageError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(ImageError::MalformedHeader(what));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(ImageError::MalformedHeader(what))
    }
}

/// Decodes binary PGM (`P5`) or PPM (`P6`) with maxval 255.
pub fn decode_image(bytes: &[u8]) -> Result<DecodedImage, ImageError> {
    if bytes.len() < 2 {
        return Err(ImageError::MalformedHeader("missing magic number"));
    }
    let channels = match &bytes[..2] {
        b"P5" => 1,
        b"P6" => 3,
        other => {
            return Err(ImageError::UnsupportedMagic(
                String::from_utf8_lossy(other).into_owned(),
            ))
        }
    };
    let mut header = HeaderReader { bytes, pos: 2 };
    if header.pos < bytes.len() && !bytes[header.pos].is_ascii_whitespace() {
        return Err(ImageError::UnsupportedMagic(
            String::from_utf8_lossy(&bytes[..3]).into_owned(),
        ));
    }
    let width = header.number("width")? as usize;
    let height = header.number("height")? as usize;
    if width == 0 || height == 0 {
        return Err(ImageError::InvalidDimensions { width, height });
    }
    let maxval = header.number("maxval")?;
    if maxval != 255 {
        return Err(ImageError::UnsupportedMaxval(maxval.min(u32::MAX as u64) as u32));
    }
    // Exactly one whitespace byte separates the header from the payload.
    match bytes.get(header.pos) {
        Some(b) if b.is_ascii_whitespace() => header.pos += 1,
        _ => {
            return Err(ImageError::Truncated {
                expected: width * height * channels,
                found: 0,
            })
        }
    }
    let payload = &bytes[header.pos..];
    let expected = width * height * channels;
    if payload.len() < expected {
        return Err(ImageError::Truncated {
            expected,
            found: payload.len(),
        });
    }
    let payload = &payload[..expected];
    Ok(if channels == 1 {
        DecodedImage::Gray(GrayImage {
            width,
            height,
            data: payload.iter().map(|&b| b as f64).collect(),
        })
    } else {
        DecodedImage::Rgb(RgbImage {
            width,
            height,
            data: payload
                .chunks_exact(3)
                .map(|c| [c[0] as f64, c[1] as f64, c[2] as f64])
                .collect(),
        })
    })
}

#[inline]
fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Encodes as binary PGM with header `P5\n<w> <h>\n255\n`.
pub fn encode_image(image: &GrayImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", image.width, image.height);
    let mut out = Vec::with_capacity(header.len() + image.data.len());
    out.extend_from_slice(header.as_bytes());
    out.extend(image.data.iter().map(|&v| quantize(v)));
    out
}

/// Encodes as binary PPM with header `P6\n<w> <h>\n255\n`.
pub fn encode_rgb(image: &RgbImage) -> Vec<u8> {
    let header = format!("P6\n{} {}\n255\n", image.width, image.height);
    let mut out = Vec::with_capacity(header.len() + 3 * image.data.len());
    out.extend_from_slice(header.as_bytes());
    for px in &image.data {
        out.extend(px.iter().map(|&v| quantize(v)));
    }
    out
}

pub fn read_image(path: &Path) -> Result<DecodedImage, ImageError> {
    let bytes = std::fs::read(path).map_err(|e| ImageError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    decode_image(&bytes)
}

pub fn write_gray(path: &Path, image: &GrayImage) -> Result<(), ImageError> {
    std::fs::write(path, encode_image(image)).map_err(|e| ImageError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// ITU-R BT.601 luma, unrounded.
pub fn to_grayscale(image: &RgbImage) -> GrayImage {
    let data = image
        .data
        .iter()
        .map(|&[r, g, b]| {
            let y = 0.299 * r + 0.587 * g + 0.114 * b;
            // Keep the result inside the channel range despite rounding.
            let lo = r.min(g).min(b);
            let hi = r.max(g).max(b);
            y.clamp(lo, hi)
        })
        .collect();
    GrayImage {
        width: image.width,
        height: image.height,
        data,
    }
}

/// Bilinear resampling with pixel-center alignment and clamp-to-edge borders.
pub fn resize_bilinear(
    image: &GrayImage,
    new_width: usize,
    new_height: usize,
) -> Result<GrayImage, ImageError> {
    if new_width == 0 || new_height == 0 {
        return Err(ImageError::ZeroTarget {
            width: new_width,
            height: new_height,
        });
    }
    if new_width == image.width && new_height == image.height {
        return Ok(image.clone());
    }
    let xs = sample_axis(image.width, new_width);
    let ys = sample_axis(image.height, new_height);
    let mut data = Vec::with_capacity(new_width * new_height);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let p00 = image.get(x0, y0);
            let p10 = image.get(x1, y0);
            let p01 = image.get(x0, y1);
            let p11 = image.get(x1, y1);
            let top = p00 + (p10 - p00) * fx;
            let bottom = p01 + (p11 - p01) * fx;
            let v = top + (bottom - top) * fy;
            let lo = p00.min(p10).min(p01).min(p11);
            let hi = p00.max(p10).max(p01).max(p11);
            data.push(v.clamp(lo, hi));
        }
    }
    Ok(GrayImage {
        width: new_width,
        height: new_height,
        data,
    })
}

/// For each output index: the two source neighbours and the fractional weight.
fn sample_axis(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let ratio = src as f64 / dst as f64;
    let last = (src - 1) as f64;
    (0..dst)
        .map(|i| {
            let s = ((i as f64 + 0.5) * ratio - 0.5).clamp(0.0, last);
            let i0 = s.floor();
            let i1 = (i0 + 1.0).min(last);
            (i0 as usize, i1 as usize, s - i0)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct PyramidLevel {
    pub image: GrayImage,
    /// Original size divided by this level's size (`scale_step^k`).
    pub scale: f64,
}

#[derive(Debug, Clone)]
pub struct ImagePyramid {
    pub levels: Vec<PyramidLevel>,
}

/// Dimensions of every pyramid level, computed without resampling.
pub fn pyramid_dims(
    width: usize,
    height: usize,
    scale_step: f64,
    min_side: usize,
) -> Result<Vec<(usize, usize, f64)>, ImageError> {
    if scale_step.is_nan() || scale_step <= 1.0 || !scale_step.is_finite() {
        return Err(ImageError::ScaleStep(scale_step));
    }
    if min_side == 0 || min_side > width.min(height) {
        return Err(ImageError::MinSideTooLarge {
            min_side,
            width,
            height,
        });
    }
    let mut dims = vec![(width, height, 1.0)];
    let mut k = 1;
    loop {
        let scale = scale_step.powi(k);
        let w = (width as f64 / scale).floor() as usize;
        let h = (height as f64 / scale).floor() as usize;
        if w < min_side || h < min_side {
            break;
        }
        dims.push((w, h, scale));
        k += 1;
    }
    Ok(dims)
}

/// Level `k` is the original resampled to `floor(size / scale_step^k)`;
/// stops before any side drops below `min_side`.
pub fn build_pyramid(
    image: &GrayImage,
    scale_step: f64,
    min_side: usize,
) -> Result<ImagePyramid, ImageError> {
    let dims = pyramid_dims(image.width, image.height, scale_step, min_side)?;
    let levels = dims
        .into_iter()
        .map(|(w, h, scale)| {
            Ok(PyramidLevel {
                image: resize_bilinear(image, w, h)?,
                scale,
            })
        })
        .collect::<Result<_, ImageError>>()?;
    Ok(ImagePyramid { levels })
}
