//! Histogram of Oriented Gradients.
//!
//! The pipeline is `compute_gradients -> cell_histograms -> block_normalize`.
//! Gradients use centered `[-1, 0, 1]` kernels with replicated borders and
//! unsigned orientation in `[0, 180)`. Each pixel splits its magnitude
//! linearly between the two nearest bin centers (`k * 180 / bins`), wrapping
//! from the last bin to bin 0. Blocks are L2-Hys normalized.
//!
//! [`FeatureMap`] evaluates the same per-cell and per-block arithmetic over a
//! whole image so that overlapping detection windows share work.

use std::fmt::Write as _;

use thiserror::Error;

use crate::image_io::GrayImage;
use crate::par::{self, Execution};

#[derive(Debug, Error, PartialEq)]
pub enum HogError {
    #[error("image {width}x{height} is smaller than 3x3")]
    TooSmall { width: usize, height: usize },
    #[error("field {width}x{height} is not divisible by cell size {cell_size}")]
    NotDivisible {
        width: usize,
        height: usize,
        cell_size: usize,
    },
    #[error("cell grid {cells_x}x{cells_y} is smaller than one {block_size}x{block_size} block")]
    GridTooSmall {
        cells_x: usize,
        cells_y: usize,
        block_size: usize,
    },
    #[error("window must be {expected}x{expected}, got {width}x{height}")]
    WrongWindow {
        expected: usize,
        width: usize,
        height: usize,
    },
    #[error("invalid hog config: {0}")]
    InvalidConfig(String),
    #[error("malformed descriptor text: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub width: usize,
    pub height: usize,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
    pub magnitude: Vec<f64>,
    /// Degrees in `[0, 180)`.
    pub orientation: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HogConfig {
    pub cell_size: usize,
    pub bins: usize,
    /// Cells per block side.
    pub block_size: usize,
    /// Block step in cells.
    pub block_stride: usize,
    pub clip: f64,
    pub epsilon: f64,
    /// Detection window side in pixels.
    pub window: usize,
}

impl Default for HogConfig {
    fn default() -> Self {
        Self {
            cell_size: 8,
            bins: 9,
            block_size: 2,
            block_stride: 1,
            clip: 0.2,
            epsilon: 1e-5,
            window: 64,
        }
    }
}

impl HogConfig {
    pub fn validate(&self) -> Result<(), HogError> {
        let bad = |m: String| Err(HogError::InvalidConfig(m));
        if self.cell_size == 0 || self.window == 0 {
            return bad("cell_size and window must be positive".into());
        }
        if !self.window.is_multiple_of(self.cell_size) {
            return bad(format!(
                "window {} not divisible by cell_size {}",
                self.window, self.cell_size
            ));
        }
        if self.window < 3 {
            return bad("window must be at least 3 pixels".into());
        }
        if self.block_size == 0 || self.block_size > self.window / self.cell_size {
            return bad(format!(
                "block_size {} must be in 1..={}",
                self.block_size,
                self.window / self.cell_size
            ));
        }
        if self.block_stride == 0 {
            return bad("block_stride must be >= 1".into());
        }
        if self.bins < 2 {
            return bad("bins must be >= 2".into());
        }
        if !(self.clip > 0.0 && self.clip <= 1.0) {
            return bad(format!("clip {} outside (0, 1]", self.clip));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon {} must be positive", self.epsilon));
        }
        Ok(())
    }

    pub fn cells_per_window(&self) -> usize {
        self.window / self.cell_size
    }

    /// Blocks along one window side.
    pub fn blocks_per_side(&self) -> usize {
        (self.cells_per_window() - self.block_size) / self.block_stride + 1
    }

    pub fn block_len(&self) -> usize {
        self.block_size * self.block_size * self.bins
    }

    pub fn descriptor_len(&self) -> usize {
        let b = self.blocks_per_side();
        b * b * self.block_len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HogDescriptor {
    pub values: Vec<f64>,
    pub config: HogConfig,
}

/// Per-cell orientation histograms, row-major cells, bins contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGrid {
    pub cells_x: usize,
    pub cells_y: usize,
    pub bins: usize,
    pub values: Vec<f64>,
}

impl CellGrid {
    pub fn cell(&self, cx: usize, cy: usize) -> &[f64] {
        let start = (cy * self.cells_x + cx) * self.bins;
        &self.values[start..start + self.bins]
    }
}

/// Folds `atan2` output into `[0, 180)` degrees.
#[inline]
fn unsigned_orientation(gx: f64, gy: f64) -> f64 {
    if gx == 0.0 && gy == 0.0 {
        return 0.0;
    }
    let mut deg = gy.atan2(gx).to_degrees();
    if deg < 0.0 {
        deg += 180.0;
    }
    if deg >= 180.0 {
        deg -= 180.0;
    }
    deg
}

#[inline]
fn pixel_gradient(image: &GrayImage, x: usize, y: usize) -> (f64, f64) {
    let (xi, yi) = (x as isize, y as isize);
    let gx = image.get_clamped(xi + 1, yi) - image.get_clamped(xi - 1, yi);
    let gy = image.get_clamped(xi, yi + 1) - image.get_clamped(xi, yi - 1);
    (gx, gy)
}

pub fn compute_gradients(image: &GrayImage) -> Result<GradientField, HogError> {
    let (width, height) = (image.width(), image.height());
    if width < 3 || height < 3 {
        return Err(HogError::TooSmall { width, height });
    }
    let n = width * height;
    let mut field = GradientField {
        width,
        height,
        gx: Vec::with_capacity(n),
        gy: Vec::with_capacity(n),
        magnitude: Vec::with_capacity(n),
        orientation: Vec::with_capacity(n),
    };
    for y in 0..height {
        for x in 0..width {
            let (gx, gy) = pixel_gradient(image, x, y);
            field.gx.push(gx);
            field.gy.push(gy);
            field.magnitude.push((gx * gx + gy * gy).sqrt());
            field.orientation.push(unsigned_orientation(gx, gy));
        }
    }
    Ok(field)
}

/// A pixel's contribution: `(lower_bin, upper_bin, lower_weight, upper_weight)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Vote {
    lo: u16,
    hi: u16,
    w_lo: f64,
    w_hi: f64,
}

#[inline]
fn vote(magnitude: f64, orientation: f64, bins: usize) -> Vote {
    if magnitude == 0.0 {
        return Vote::default();
    }
    let pos = orientation * bins as f64 / 180.0;
    let base = pos.floor();
    let frac = pos - base;
    let lo = (base as usize) % bins;
    let hi = (lo + 1) % bins;
    Vote {
        lo: lo as u16,
        hi: hi as u16,
        w_lo: magnitude * (1.0 - frac),
        w_hi: magnitude * frac,
    }
}

/// Sums the votes of one `cell_size x cell_size` cell, rows outer, columns inner.
#[inline]
fn accumulate_cell(
    votes: &[Vote],
    stride: usize,
    x0: usize,
    y0: usize,
    cell_size: usize,
    out: &mut [f64],
) {
    for y in y0..y0 + cell_size {
        let row = &votes[y * stride + x0..y * stride + x0 + cell_size];
        for v in row {
            out[v.lo as usize] += v.w_lo;
            out[v.hi as usize] += v.w_hi;
        }
    }
}

pub fn cell_histograms(field: &GradientField, config: &HogConfig) -> Result<CellGrid, HogError> {
    let cs = config.cell_size;
    if cs == 0 || !field.width.is_multiple_of(cs) || !field.height.is_multiple_of(cs) {
        return Err(HogError::NotDivisible {
            width: field.width,
            height: field.height,
            cell_size: cs,
        });
    }
    let votes: Vec<Vote> = field
        .magnitude
        .iter()
        .zip(&field.orientation)
        .map(|(&m, &o)| vote(m, o, config.bins))
        .collect();
    let (cells_x, cells_y) = (field.width / cs, field.height / cs);
    let mut values = vec![0.0; cells_x * cells_y * config.bins];
    for cy in 0..cells_y {
        for cx in 0..cells_x {
            let start = (cy * cells_x + cx) * config.bins;
            accumulate_cell(
                &votes,
                field.width,
                cx * cs,
                cy * cs,
                cs,
                &mut values[start..start + config.bins],
            );
        }
    }
    Ok(CellGrid {
        cells_x,
        cells_y,
        bins: config.bins,
        values,
    })
}

/// L2-Hys in place: normalize, clip, renormalize.
#[inline]
fn l2_hys(v: &mut [f64], clip: f64, epsilon: f64) {
    let eps2 = epsilon * epsilon;
    let norm = (v.iter().map(|x| x * x).sum::<f64>() + eps2).sqrt();
    for x in v.iter_mut() {
        *x = (*x / norm).min(clip);
    }
    let norm = (v.iter().map(|x| x * x).sum::<f64>() + eps2).sqrt();
    for x in v.iter_mut() {
        *x /= norm;
    }
}

pub fn block_normalize(grid: &CellGrid, config: &HogConfig) -> Result<HogDescriptor, HogError> {
    let b = config.block_size;
    if grid.cells_x < b || grid.cells_y < b || b == 0 {
        return Err(HogError::GridTooSmall {
            cells_x: grid.cells_x,
            cells_y: grid.cells_y,
            block_size: b,
        });
    }
    let blocks_x = (grid.cells_x - b) / config.block_stride + 1;
    let blocks_y = (grid.cells_y - b) / config.block_stride + 1;
    let block_len = b * b * grid.bins;
    let mut values = Vec::with_capacity(blocks_x * blocks_y * block_len);
    let mut block = vec![0.0; block_len];
    for by in 0..blocks_y {
        for bx in 0..blocks_x {
            let (cx0, cy0) = (bx * config.block_stride, by * config.block_stride);
            for j in 0..b {
                for i in 0..b {
                    let start = (j * b + i) * grid.bins;
                    block[start..start + grid.bins].copy_from_slice(grid.cell(cx0 + i, cy0 + j));
                }
            }
            l2_hys(&mut block, config.clip, config.epsilon);
            values.extend_from_slice(&block);
        }
    }
    Ok(HogDescriptor {
        values,
        config: *config,
    })
}

/// Descriptor of one `window x window` image.
pub fn hog_descriptor(window: &GrayImage, config: &HogConfig) -> Result<HogDescriptor, HogError> {
    config.validate()?;
    if window.width() != config.window || window.height() != config.window {
        return Err(HogError::WrongWindow {
            expected: config.window,
            width: window.width(),
            height: window.height(),
        });
    }
    let field = compute_gradients(window)?;
    let grid = cell_histograms(&field, config)?;
    block_normalize(&grid, config)
}

/// Nine significant digits in scientific notation; parses back to the same text.
pub(crate) fn fmt_sig9(v: f64) -> String {
    format!("{v:.8e}")
}

impl HogDescriptor {
    /// Two-line text form: a `hog <window> <cell> <block> <stride> <bins>`
    /// header followed by the values.
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut out = format!(
            "hog {} {} {} {} {}\n",
            c.window, c.cell_size, c.block_size, c.block_stride, c.bins
        );
        for (i, v) in self.values.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{}", fmt_sig9(*v));
        }
        out.push('\n');
        out
    }

    /// Inverse of [`HogDescriptor::to_text`]; `clip` and `epsilon` take defaults.
    pub fn from_text(text: &str) -> Result<Self, HogError> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| HogError::Parse("empty input".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 6 || fields[0] != "hog" {
            return Err(HogError::Parse(format!("bad header {header:?}")));
        }
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| HogError::Parse(format!("bad integer {s:?}")))
        };
        let config = HogConfig {
            window: num(fields[1])?,
            cell_size: num(fields[2])?,
            block_size: num(fields[3])?,
            block_stride: num(fields[4])?,
            bins: num(fields[5])?,
            ..HogConfig::default()
        };
        config.validate()?;
        let values = lines
            .next()
            .unwrap_or("")
            .split_whitespace()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| HogError::Parse(format!("bad value {s:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if values.len() != config.descriptor_len() {
            return Err(HogError::Parse(format!(
                "expected {} values, found {}",
                config.descriptor_len(),
                values.len()
            )));
        }
        Ok(Self { values, config })
    }
}

/// Maps absolute pixel coordinates to dense slot indices for the origins in use.
#[derive(Debug, Clone)]
struct OriginIndex {
    slots: Vec<Option<u32>>,
    origins: Vec<usize>,
}

impl OriginIndex {
    fn new(extent: usize, mut origins: Vec<usize>) -> Self {
        origins.sort_unstable();
        origins.dedup();
        let mut slots = vec![None; extent];
        for (i, &o) in origins.iter().enumerate() {
            slots[o] = Some(i as u32);
        }
        Self { slots, origins }
    }

    #[inline]
    fn slot(&self, origin: usize) -> usize {
        self.slots[origin].expect("origin was registered") as usize
    }
}

/// HOG features of a whole image, evaluated lazily for a set of window origins.
///
/// Gradients come from the full image, so pixels on a window's border see their
/// true neighbours instead of a replicated edge. Window descriptors therefore
/// match [`hog_descriptor`] of the crop everywhere except in cells touching the
/// crop border; when the window covers the entire image they match exactly.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    config: HogConfig,
    width: usize,
    height: usize,
    block_x: OriginIndex,
    block_y: OriginIndex,
    /// Normalized blocks, `block_y.origins.len() x block_x.origins.len() x block_len`.
    blocks: Vec<f64>,
}

impl FeatureMap {
    /// Prepares every block needed by windows with top-left corners in
    /// `window_xs x window_ys`.
    pub fn new(
        image: &GrayImage,
        config: &HogConfig,
        window_xs: &[usize],
        window_ys: &[usize],
        exec: Execution,
    ) -> Result<Self, HogError> {
        config.validate()?;
        let (width, height) = (image.width(), image.height());
        if width < config.window || height < config.window {
            return Err(HogError::WrongWindow {
                expected: config.window,
                width,
                height,
            });
        }
        if width < 3 || height < 3 {
            return Err(HogError::TooSmall { width, height });
        }
        if let Some(&bad) = window_xs.iter().find(|&&x| x + config.window > width) {
            return Err(HogError::InvalidConfig(format!(
                "window x {bad} exceeds width {width}"
            )));
        }
        if let Some(&bad) = window_ys.iter().find(|&&y| y + config.window > height) {
            return Err(HogError::InvalidConfig(format!(
                "window y {bad} exceeds height {height}"
            )));
        }

        let cs = config.cell_size;
        let step = config.block_stride * cs;
        let blocks = config.blocks_per_side();
        let block_origins = |ws: &[usize]| -> Vec<usize> {
            ws.iter()
                .flat_map(|&w| (0..blocks).map(move |k| w + k * step))
                .collect()
        };
        let block_x = OriginIndex::new(width, block_origins(window_xs));
        let block_y = OriginIndex::new(height, block_origins(window_ys));
        let cell_origins = |bs: &OriginIndex| -> Vec<usize> {
            bs.origins
                .iter()
                .flat_map(|&b| (0..config.block_size).map(move |i| b + i * cs))
                .collect()
        };
        let cell_x = OriginIndex::new(width, cell_origins(&block_x));
        let cell_y = OriginIndex::new(height, cell_origins(&block_y));

        let bins = config.bins;
        // Votes are needed only in rows and columns that some cell covers.
        let votes = par::map_range(exec, height, |y| {
            (0..width)
                .map(|x| {
                    let (gx, gy) = pixel_gradient(image, x, y);
                    let mag = (gx * gx + gy * gy).sqrt();
                    vote(mag, unsigned_orientation(gx, gy), bins)
                })
                .collect::<Vec<_>>()
        })
        .concat();

        let ncx = cell_x.origins.len();
        let mut cells = vec![0.0; ncx * cell_y.origins.len() * bins];
        if ncx > 0 {
            par::for_each_chunk(exec, &mut cells, ncx * bins, |row, out| {
                let y0 = cell_y.origins[row];
                for (i, &x0) in cell_x.origins.iter().enumerate() {
                    accumulate_cell(&votes, width, x0, y0, cs, &mut out[i * bins..(i + 1) * bins]);
                }
            });
        }

        let block_len = config.block_len();
        let nbx = block_x.origins.len();
        let mut block_values = vec![0.0; nbx * block_y.origins.len() * block_len];
        if nbx > 0 {
            let b = config.block_size;
            par::for_each_chunk(exec, &mut block_values, nbx * block_len, |row, out| {
                let by = block_y.origins[row];
                for (i, &bx) in block_x.origins.iter().enumerate() {
                    let block = &mut out[i * block_len..(i + 1) * block_len];
                    for j in 0..b {
                        let cy = cell_y.slot(by + j * cs);
                        for k in 0..b {
                            let cx = cell_x.slot(bx + k * cs);
                            let src = (cy * ncx + cx) * bins;
                            let dst = (j * b + k) * bins;
                            block[dst..dst + bins].copy_from_slice(&cells[src..src + bins]);
                        }
                    }
                    l2_hys(block, config.clip, config.epsilon);
                }
            });
        }

        Ok(Self {
            config: *config,
            width,
            height,
            block_x,
            block_y,
            blocks: block_values,
        })
    }

    pub fn config(&self) -> &HogConfig {
        &self.config
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    fn block(&self, bx: usize, by: usize) -> &[f64] {
        let len = self.config.block_len();
        let idx = self.block_y.slot(by) * self.block_x.origins.len() + self.block_x.slot(bx);
        &self.blocks[idx * len..(idx + 1) * len]
    }

    /// Visits the window's blocks in descriptor order.
    fn for_each_block(&self, x: usize, y: usize, mut f: impl FnMut(&[f64])) {
        let step = self.config.block_stride * self.config.cell_size;
        let blocks = self.config.blocks_per_side();
        for j in 0..blocks {
            for i in 0..blocks {
                f(self.block(x + i * step, y + j * step));
            }
        }
    }

    /// Descriptor of the window at `(x, y)`; the origin must have been registered.
    pub fn window_descriptor(&self, x: usize, y: usize) -> HogDescriptor {
        let mut values = Vec::with_capacity(self.config.descriptor_len());
        self.for_each_block(x, y, |b| values.extend_from_slice(b));
        HogDescriptor {
            values,
            config: self.config,
        }
    }

    /// `dot(weights, descriptor)`, summed in descriptor order.
    pub fn window_dot(&self, x: usize, y: usize, weights: &[f64]) -> f64 {
        let mut acc = 0.0;
        let mut w = weights.iter();
        self.for_each_block(x, y, |b| {
            for v in b {
                acc += w.next().expect("weights match descriptor length") * v;
            }
        });
        acc
    }
}
