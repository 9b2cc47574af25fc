//! Per-frame detection latency and throughput for a cheap and an exhaustive backend.

use std::fmt::Write as _;
use std::time::Instant;

use thiserror::Error;

use crate::detector::{detect_with, window_count, DetectParams, Detection, DetectorError, LinearModel};
use crate::image_io::GrayImage;
use crate::par::Execution;

#[derive(Debug, Error, PartialEq)]
pub enum BenchError {
    #[error("unknown backend {0:?} (expected hog, dense, hog-par or dense-par)")]
    UnknownBackend(String),
    #[error("no frames to benchmark")]
    NoFrames,
    #[error("at least 3 timed repeats are required, got {0}")]
    TooFewRepeats(usize),
    #[error("detections changed between passes on frame {0}")]
    NonDeterministic(usize),
    #[error(transparent)]
    Detector(#[from] DetectorError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchBackend {
    pub name: String,
    pub params: DetectParams,
    pub exec: Execution,
}

impl BenchBackend {
    /// Default sliding window: stride 8, scale step 1.25.
    pub fn hog() -> Self {
        Self {
            name: "hog".into(),
            params: DetectParams::default(),
            exec: Execution::Sequential,
        }
    }

    /// Exhaustive stand-in for an expensive detector: stride 1, scale step 1.1.
    pub fn dense() -> Self {
        Self {
            name: "dense".into(),
            params: DetectParams {
                window_stride: 1,
                scale_step: 1.1,
                ..DetectParams::default()
            },
            exec: Execution::Sequential,
        }
    }

    /// `hog` and `dense`, plus `-par` variants that let the detector use rayon.
    pub fn from_name(name: &str) -> Result<Self, BenchError> {
        let (base, exec) = match name.strip_suffix("-par") {
            Some(base) => (base, Execution::Parallel),
            None => (name, Execution::Sequential),
        };
        let mut backend = match base {
            "hog" => Self::hog(),
            "dense" => Self::dense(),
            _ => return Err(BenchError::UnknownBackend(name.into())),
        };
        backend.name = name.into();
        backend.exec = exec;
        Ok(backend)
    }

    /// Windows scored on one `width x height` frame.
    pub fn windows_per_frame(&self, width: usize, height: usize, window: usize) -> usize {
        window_count(width, height, window, &self.params)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub backend: String,
    pub frames: usize,
    /// Median pass time divided by the frame count.
    pub mean_seconds: f64,
    /// Frames per second of the median pass.
    pub fps: f64,
    /// Wall time of every timed pass, in run order.
    pub pass_seconds: Vec<f64>,
    /// Detections of the last pass, per frame.
    pub detections: Vec<Vec<Detection>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchOptions {
    pub warmup: usize,
    pub repeats: usize,
    /// Prints one timing line per pass to standard error.
    pub verbose: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            warmup: 1,
            repeats: 5,
            verbose: false,
        }
    }
}

fn run_pass(
    backend: &BenchBackend,
    frames: &[GrayImage],
    model: &LinearModel,
) -> Result<(f64, Vec<Vec<Detection>>), BenchError> {
    let start = Instant::now();
    let mut out = Vec::with_capacity(frames.len());
    for frame in frames {
        out.push(detect_with(frame, model, &backend.params, backend.exec)?);
    }
    Ok((start.elapsed().as_secs_f64(), out))
}

/// Untimed warmup passes, then `repeats` timed passes over all frames.
/// Fails if any pass produces different detections than the first.
pub fn run_bench(
    backend: &BenchBackend,
    frames: &[GrayImage],
    model: &LinearModel,
    options: &BenchOptions,
) -> Result<BenchReport, BenchError> {
    if frames.is_empty() {
        return Err(BenchError::NoFrames);
    }
    if options.repeats < 3 {
        return Err(BenchError::TooFewRepeats(options.repeats));
    }
    let mut reference: Option<Vec<Vec<Detection>>> = None;
    let mut check = |dets: Vec<Vec<Detection>>| -> Result<(), BenchError> {
        match &reference {
            None => reference = Some(dets),
            Some(r) => {
                if let Some(i) = r.iter().zip(&dets).position(|(a, b)| a != b) {
                    return Err(BenchError::NonDeterministic(i));
                }
            }
        }
        Ok(())
    };
    for _ in 0..options.warmup {
        let (_, dets) = run_pass(backend, frames, model)?;
        check(dets)?;
    }
    let mut pass_seconds = Vec::with_capacity(options.repeats);
    for pass in 0..options.repeats {
        let (secs, dets) = run_pass(backend, frames, model)?;
        if options.verbose {
            eprintln!("{} pass {} {:.6}s", backend.name, pass + 1, secs);
        }
        pass_seconds.push(secs);
        check(dets)?;
    }
    let mut sorted = pass_seconds.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2].max(f64::MIN_POSITIVE);
    let n = frames.len() as f64;
    Ok(BenchReport {
        backend: backend.name.clone(),
        frames: frames.len(),
        mean_seconds: median / n,
        fps: n / median,
        pass_seconds,
        detections: reference.unwrap_or_default(),
    })
}

pub const REPORT_HEADER: &str = "Model Name,Image Capture Speed (Sec),Fps Value";

/// Report CSV: backend name in capitals, seconds per frame to four decimals, whole fps.
pub fn emit_report(reports: &[BenchReport]) -> Vec<u8> {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(
            out,
            "{},{:.4},{}",
            r.backend.to_uppercase(),
            r.mean_seconds,
            r.fps.round() as i64
        );
    }
    out.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hog::HogConfig;

    fn report(name: &str, secs: f64, fps: f64) -> BenchReport {
        BenchReport {
            backend: name.into(),
            frames: 1,
            mean_seconds: secs,
            fps,
            pass_seconds: vec![],
            detections: vec![],
        }
    }

    #[test]
    fn report_layout() {
        assert_eq!(
            String::from_utf8(emit_report(&[report("hog", 0.0322, 15.2)])).unwrap(),
            "Model Name,Image Capture Speed (Sec),Fps Value\nHOG,0.0322,15\n"
        );
        let golden = "Model Name,Image Capture Speed (Sec),Fps Value\n\
                      DENSE,0.3262,5\n\
                      HOG,0.0322,16\n";
        assert_eq!(
            String::from_utf8(emit_report(&[report("dense", 0.32624, 4.6), report("hog", 0.03216, 15.5)]))
                .unwrap(),
            golden
        );
    }

    #[test]
    fn backend_names() {
        assert_eq!(BenchBackend::from_name("hog").unwrap(), BenchBackend::hog());
        let dp = BenchBackend::from_name("dense-par").unwrap();
        assert_eq!((dp.params.window_stride, dp.exec), (1, Execution::Parallel));
        assert_eq!(
            BenchBackend::from_name("xyz"),
            Err(BenchError::UnknownBackend("xyz".into()))
        );
    }

    #[test]
    fn dense_scores_more_windows() {
        let (hog, dense) = (BenchBackend::hog(), BenchBackend::dense());
        // A frame exactly one window in size has a single window under any backend.
        assert_eq!(dense.windows_per_frame(64, 64, 64), hog.windows_per_frame(64, 64, 64));
        for (w, h) in [(65, 64), (65, 100), (128, 128), (320, 240)] {
            assert!(dense.windows_per_frame(w, h, 64) > hog.windows_per_frame(w, h, 64));
        }
        assert!(dense.windows_per_frame(320, 240, 64) >= 64 * hog.windows_per_frame(320, 240, 64));
    }

    #[test]
    fn argument_checks() {
        let model = LinearModel {
            weights: vec![0.0; 1764],
            bias: -1.0,
            config: HogConfig::default(),
        };
        let opts = BenchOptions { warmup: 0, repeats: 2, verbose: false };
        assert_eq!(
            run_bench(&BenchBackend::hog(), &[GrayImage::filled(64, 64, 0.0)], &model, &opts),
            Err(BenchError::TooFewRepeats(2))
        );
        assert_eq!(
            run_bench(&BenchBackend::hog(), &[], &model, &BenchOptions::default()),
            Err(BenchError::NoFrames)
        );
        let r = run_bench(
            &BenchBackend::hog(),
            &[GrayImage::filled(80, 70, 3.0)],
            &model,
            &BenchOptions::default(),
        )
        .unwrap();
        assert_eq!(r.pass_seconds.len(), 5);
        assert!(r.mean_seconds > 0.0 && r.fps > 0.0);
        assert!((r.fps * r.mean_seconds - 1.0).abs() < 1e-9);
    }
}
