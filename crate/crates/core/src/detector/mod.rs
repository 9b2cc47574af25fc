//! Multi-scale sliding-window face detection with a linear model over HOG features.

mod nms;
pub mod synth;
mod train;

use std::fmt::Write as _;

use thiserror::Error;

pub use nms::{iou, nms};
pub use synth::{generate_synthetic_frame, FrameSpec, PlantedFace};
pub use train::{accuracy, hinge_loss, train_linear, TrainParams};

use crate::hog::{fmt_sig9, FeatureMap, HogConfig, HogDescriptor, HogError};
use crate::image_io::{pyramid_dims, resize_bilinear, GrayImage, ImageError};
use crate::par::{self, Execution};

#[derive(Debug, Error, PartialEq)]
pub enum DetectorError {
    #[error("descriptor config does not match the model config")]
    ConfigMismatch,
    #[error("no {0} training examples")]
    EmptyClass(&'static str),
    #[error("image {width}x{height} is smaller than the {window}px window")]
    ImageTooSmall {
        width: usize,
        height: usize,
        window: usize,
    },
    #[error("invalid detection parameters: {0}")]
    InvalidParams(String),
    #[error("malformed model file: {0}")]
    ModelFormat(String),
    #[error("synthetic frame: {0}")]
    Synthetic(String),
    #[error(transparent)]
    Hog(#[from] HogError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Square box in original-image pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub x: usize,
    pub y: usize,
    pub side: usize,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectParams {
    pub score_threshold: f64,
    pub window_stride: usize,
    pub scale_step: f64,
    pub nms_iou: f64,
}

impl Default for DetectParams {
    fn default() -> Self {
        Self {
            score_threshold: 0.0,
            window_stride: 8,
            scale_step: 1.25,
            nms_iou: 0.3,
        }
    }
}

impl DetectParams {
    pub fn validate(&self) -> Result<(), DetectorError> {
        if self.window_stride == 0 {
            return Err(DetectorError::InvalidParams("window_stride must be >= 1".into()));
        }
        if !(self.scale_step > 1.0 && self.scale_step.is_finite()) {
            return Err(DetectorError::InvalidParams(format!(
                "scale_step {} must be > 1",
                self.scale_step
            )));
        }
        if !(self.nms_iou > 0.0 && self.nms_iou < 1.0) {
            return Err(DetectorError::InvalidParams(format!(
                "nms_iou {} outside (0, 1)",
                self.nms_iou
            )));
        }
        if !self.score_threshold.is_finite() {
            return Err(DetectorError::InvalidParams("score_threshold must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub config: HogConfig,
}

const MODEL_MAGIC: &str = "linear-hog v1";

impl LinearModel {
    pub fn validate(&self) -> Result<(), DetectorError> {
        self.config.validate()?;
        if self.weights.len() != self.config.descriptor_len() {
            return Err(DetectorError::ModelFormat(format!(
                "{} weights for a descriptor of length {}",
                self.weights.len(),
                self.config.descriptor_len()
            )));
        }
        if !self.bias.is_finite() || self.weights.iter().any(|w| !w.is_finite()) {
            return Err(DetectorError::ModelFormat("non-finite parameter".into()));
        }
        Ok(())
    }

    /// Four lines: magic, config, bias, weights.
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut out = format!(
            "{MODEL_MAGIC}\n{} {} {} {} {} {} {}\n{}\n",
            c.cell_size,
            c.bins,
            c.block_size,
            c.block_stride,
            c.clip,
            c.epsilon,
            c.window,
            fmt_sig9(self.bias)
        );
        for (i, w) in self.weights.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{}", fmt_sig9(*w));
        }
        out.push('\n');
        out
    }

    pub fn from_text(text: &str) -> Result<Self, DetectorError> {
        let bad = |m: String| DetectorError::ModelFormat(m);
        let mut lines = text.lines();
        if lines.next() != Some(MODEL_MAGIC) {
            return Err(bad(format!("first line must be {MODEL_MAGIC:?}")));
        }
        let cfg: Vec<&str> = lines
            .next()
            .ok_or_else(|| bad("missing config line".into()))?
            .split_whitespace()
            .collect();
        if cfg.len() != 7 {
            return Err(bad(format!("config line has {} fields, expected 7", cfg.len())));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("bad integer {s:?}")));
        let real = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number {s:?}")));
        let config = HogConfig {
            cell_size: int(cfg[0])?,
            bins: int(cfg[1])?,
            block_size: int(cfg[2])?,
            block_stride: int(cfg[3])?,
            clip: real(cfg[4])?,
            epsilon: real(cfg[5])?,
            window: int(cfg[6])?,
        };
        let bias = real(lines.next().ok_or_else(|| bad("missing bias line".into()))?.trim())?;
        let weights = lines
            .next()
            .ok_or_else(|| bad("missing weights line".into()))?
            .split_whitespace()
            .map(real)
            .collect::<Result<Vec<_>, _>>()?;
        let model = Self {
            weights,
            bias,
            config,
        };
        model.validate()?;
        Ok(model)
    }
}

/// `dot(weights, descriptor) + bias`.
pub fn score_window(model: &LinearModel, descriptor: &HogDescriptor) -> Result<f64, DetectorError> {
    if descriptor.config != model.config || descriptor.values.len() != model.weights.len() {
        return Err(DetectorError::ConfigMismatch);
    }
    let dot = model
        .weights
        .iter()
        .zip(&descriptor.values)
        .fold(0.0, |acc, (w, v)| acc + w * v);
    Ok(dot + model.bias)
}

fn window_positions(extent: usize, window: usize, stride: usize) -> Vec<usize> {
    (0..=extent - window).step_by(stride).collect()
}

/// Number of windows `detect` scores on a `width x height` frame.
pub fn window_count(width: usize, height: usize, window: usize, params: &DetectParams) -> usize {
    if width < window || height < window {
        return 0;
    }
    pyramid_dims(width, height, params.scale_step, window)
        .map(|dims| {
            dims.iter()
                .map(|&(w, h, _)| {
                    ((w - window) / params.window_stride + 1) * ((h - window) / params.window_stride + 1)
                })
                .sum()
        })
        .unwrap_or(0)
}

fn map_to_original(lx: usize, ly: usize, window: usize, scale: f64, width: usize, height: usize) -> (usize, usize, usize) {
    let side = ((window as f64 * scale).round() as usize).min(width).min(height);
    let x = ((lx as f64 * scale).round() as usize).min(width - side);
    let y = ((ly as f64 * scale).round() as usize).min(height - side);
    (x, y, side)
}

/// Every window scoring above the threshold, before suppression, in
/// level / row / column order.
pub fn detect_candidates(
    image: &GrayImage,
    model: &LinearModel,
    params: &DetectParams,
    exec: Execution,
) -> Result<Vec<Detection>, DetectorError> {
    params.validate()?;
    model.validate()?;
    let window = model.config.window;
    let (width, height) = (image.width(), image.height());
    if width < window || height < window {
        return Err(DetectorError::ImageTooSmall {
            width,
            height,
            window,
        });
    }
    let mut out = Vec::new();
    for (lw, lh, scale) in pyramid_dims(width, height, params.scale_step, window)? {
        let level = resize_bilinear(image, lw, lh)?;
        let xs = window_positions(lw, window, params.window_stride);
        let ys = window_positions(lh, window, params.window_stride);
        let map = FeatureMap::new(&level, &model.config, &xs, &ys, exec)?;
        let rows = par::map_range(exec, ys.len(), |j| {
            let ly = ys[j];
            xs.iter()
                .filter_map(|&lx| {
                    let score = map.window_dot(lx, ly, &model.weights) + model.bias;
                    (score > params.score_threshold).then(|| {
                        let (x, y, side) = map_to_original(lx, ly, window, scale, width, height);
                        Detection { x, y, side, score }
                    })
                })
                .collect::<Vec<_>>()
        });
        out.extend(rows.into_iter().flatten());
    }
    Ok(out)
}

/// Detects faces; the result is NMS-filtered and sorted by descending score.
pub fn detect_with(
    image: &GrayImage,
    model: &LinearModel,
    params: &DetectParams,
    exec: Execution,
) -> Result<Vec<Detection>, DetectorError> {
    let candidates = detect_candidates(image, model, params, exec)?;
    Ok(nms(&candidates, params.nms_iou))
}

/// [`detect_with`] using rayon when available.
pub fn detect(
    image: &GrayImage,
    model: &LinearModel,
    params: &DetectParams,
) -> Result<Vec<Detection>, DetectorError> {
    detect_with(image, model, params, Execution::best_available())
}
