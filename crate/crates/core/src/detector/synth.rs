//! Seeded synthetic frames with planted face-like patterns and exact ground truth.
//!
//! A face is a bright rounded oval (a superellipse) on a dark ground with two dark eye blobs and a
//! mouth bar. The identity selects a stripe texture across the oval (its angle
//! and period) so that different identities produce different gradient
//! statistics while sharing the outline the detector keys on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Detection, DetectorError};
use crate::image_io::GrayImage;

const GROUND: f64 = 35.0;
const SKIN: f64 = 185.0;
const STRIPE: f64 = 60.0;
/// Stripe period in normalized face units (the face spans 2).
const PERIOD: f64 = 0.18;
const EYE: f64 = 40.0;
const MOUTH: f64 = 70.0;
const SUPERSAMPLE: usize = 3;

/// Number of distinct identity textures; identity `k` and `k + IDENTITIES` look alike.
pub const IDENTITIES: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedFace {
    pub x: usize,
    pub y: usize,
    pub side: usize,
    pub identity: u32,
}

impl PlantedFace {
    pub fn truth(&self) -> Detection {
        Detection {
            x: self.x,
            y: self.y,
            side: self.side,
            score: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSpec {
    pub width: usize,
    pub height: usize,
    pub faces: Vec<PlantedFace>,
    /// Peak amplitude of the uniform background noise.
    pub noise: f64,
}

impl FrameSpec {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            faces: Vec::new(),
            noise: 6.0,
        }
    }

    pub fn with_face(mut self, x: usize, y: usize, side: usize, identity: u32) -> Self {
        self.faces.push(PlantedFace {
            x,
            y,
            side,
            identity,
        });
        self
    }
}

struct Style {
    /// Unit normal of the stripes.
    dir: (f64, f64),
    period: f64,
}

fn style(identity: u32) -> Style {
    let angle = (identity % IDENTITIES) as f64 * (180.0 / IDENTITIES as f64).to_radians();
    Style {
        dir: (angle.cos(), angle.sin()),
        period: PERIOD,
    }
}

/// Intensity of the face template at normalized coordinates `u, v in [-1, 1]`,
/// or `None` outside the oval.
fn face_value(u: f64, v: f64, style: &Style) -> Option<f64> {
    if (u / 0.92).powi(4) + (v / 0.96).powi(4) > 1.0 {
        return None;
    }
    for ex in [-0.34, 0.34] {
        if (u - ex).powi(2) + (v + 0.22).powi(2) < 0.15f64.powi(2) {
            return Some(EYE);
        }
    }
    if (u / 0.34).powi(2) + ((v - 0.5) / 0.08).powi(2) < 1.0 {
        return Some(MOUTH);
    }
    let phase = (u * style.dir.0 + v * style.dir.1) / style.period;
    let stripe = if phase.rem_euclid(1.0) < 0.5 {
        STRIPE
    } else {
        -STRIPE
    };
    Some(SKIN + stripe)
}

/// Writes a face into `canvas` (row-major, `width` wide). Parts outside the canvas are clipped.
fn paint_face(canvas: &mut [f64], width: usize, height: usize, x: isize, y: isize, side: usize, identity: u32) {
    let st = style(identity);
    let s = side as f64;
    let n = (SUPERSAMPLE * SUPERSAMPLE) as f64;
    for py in y.max(0)..(y + side as isize).min(height as isize) {
        for px in x.max(0)..(x + side as isize).min(width as isize) {
            let mut acc = 0.0;
            let mut hit = false;
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let fx = (px - x) as f64 + (sx as f64 + 0.5) / SUPERSAMPLE as f64;
                    let fy = (py - y) as f64 + (sy as f64 + 0.5) / SUPERSAMPLE as f64;
                    let u = 2.0 * fx / s - 1.0;
                    let v = 2.0 * fy / s - 1.0;
                    match face_value(u, v, &st) {
                        Some(val) => {
                            acc += val;
                            hit = true;
                        }
                        None => acc += GROUND,
                    }
                }
            }
            if hit {
                canvas[py as usize * width + px as usize] = acc / n;
            }
        }
    }
}

fn noisy_ground(width: usize, height: usize, noise: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    vec![GROUND; width * height]
        .into_iter()
        .map(|g| if noise > 0.0 { g + rng.gen_range(-noise..=noise) } else { g })
        .collect()
}

fn boxes_overlap(a: &PlantedFace, b: &PlantedFace) -> bool {
    a.x < b.x + b.side && b.x < a.x + a.side && a.y < b.y + b.side && b.y < a.y + a.side
}

/// Renders a frame and returns it with the planted boxes as ground truth.
pub fn generate_synthetic_frame(
    spec: &FrameSpec,
    seed: u64,
) -> Result<(GrayImage, Vec<Detection>), DetectorError> {
    if spec.width == 0 || spec.height == 0 {
        return Err(DetectorError::Synthetic("frame must be non-empty".into()));
    }
    for (i, f) in spec.faces.iter().enumerate() {
        if f.side == 0 || f.x + f.side > spec.width || f.y + f.side > spec.height {
            return Err(DetectorError::Synthetic(format!(
                "face {i} at ({}, {}, {}) outside {}x{} frame",
                f.x, f.y, f.side, spec.width, spec.height
            )));
        }
        if spec.faces[..i].iter().any(|g| boxes_overlap(f, g)) {
            return Err(DetectorError::Synthetic(format!("face {i} overlaps another face")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut canvas = vec![GROUND; spec.width * spec.height];
    for f in &spec.faces {
        paint_face(&mut canvas, spec.width, spec.height, f.x as isize, f.y as isize, f.side, f.identity);
    }
    let noise = noisy_ground(spec.width, spec.height, spec.noise, &mut rng);
    let image = GrayImage::from_fn(spec.width, spec.height, |x, y| {
        let i = y * spec.width + x;
        canvas[i] + (noise[i] - GROUND)
    });
    Ok((image, spec.faces.iter().map(PlantedFace::truth).collect()))
}

/// A `side x side` portrait: the face fills the frame exactly. Used for enrollment photos.
pub fn render_portrait(identity: u32, side: usize, noise: f64, seed: u64) -> GrayImage {
    let spec = FrameSpec {
        width: side,
        height: side,
        faces: vec![PlantedFace {
            x: 0,
            y: 0,
            side,
            identity,
        }],
        noise,
    };
    generate_synthetic_frame(&spec, seed)
        .expect("portrait face fits its frame")
        .0
}

/// Renders a `window x window` crop of a scene in which a face of `side`
/// pixels has its top-left corner at `(x, y)` relative to the crop.
fn render_window(window: usize, x: isize, y: isize, side: usize, identity: u32, rng: &mut ChaCha8Rng) -> GrayImage {
    let mut canvas = vec![GROUND; window * window];
    paint_face(&mut canvas, window, window, x, y, side, identity);
    let noise = noisy_ground(window, window, 6.0, rng);
    GrayImage::from_fn(window, window, |px, py| {
        let i = py * window + px;
        canvas[i] + (noise[i] - GROUND)
    })
}

/// Labeled face/non-face windows for detector training.
///
/// Positives are faces that roughly fill the window (size within about one
/// pyramid step, a few pixels of offset). Negatives are noisy or flat background, faces
/// shifted far off-center, faces too small for the window and close-ups that
/// show only part of a face.
pub fn training_windows(
    n_pos: usize,
    n_neg: usize,
    window: usize,
    seed: u64,
) -> (Vec<GrayImage>, Vec<GrayImage>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = window as f64;
    let mut positives = Vec::with_capacity(n_pos);
    for _ in 0..n_pos {
        let side = (w * rng.gen_range(0.9..1.12)).round() as usize;
        let slack = (w - side as f64) / 2.0;
        let jitter = w * 0.06;
        let x = (slack + rng.gen_range(-jitter..=jitter)).round() as isize;
        let y = (slack + rng.gen_range(-jitter..=jitter)).round() as isize;
        let identity = rng.gen_range(0..IDENTITIES);
        positives.push(render_window(window, x, y, side, identity, &mut rng));
    }
    let mut negatives = Vec::with_capacity(n_neg);
    for i in 0..n_neg {
        let identity = rng.gen_range(0..IDENTITIES);
        let img = match i % 5 {
            // Every other background window is perfectly flat (a zero descriptor).
            0 if i % 10 == 5 => GrayImage::filled(window, window, rng.gen_range(0.0..=255.0f64).round()),
            0 => render_window(window, 0, 0, 0, identity, &mut rng),
            1 => {
                // Same scale, displaced by 35-70% of a side.
                let side = (w * rng.gen_range(0.9..1.1)).round() as usize;
                let axes = rng.gen_range(0..3);
                let mut off = || {
                    let d = w * rng.gen_range(0.35..0.7);
                    if rng.gen_bool(0.5) { d } else { -d }
                };
                let (dx, dy) = match axes {
                    0 => (off(), 0.0),
                    1 => (0.0, off()),
                    _ => (off(), off()),
                };
                render_window(window, dx.round() as isize, dy.round() as isize, side, identity, &mut rng)
            }
            2 => {
                let side = (w * rng.gen_range(0.35..0.7)).round() as usize;
                let x = rng.gen_range(0..=window - side) as isize;
                let y = rng.gen_range(0..=window - side) as isize;
                render_window(window, x, y, side, identity, &mut rng)
            }
            _ => {
                let side = (w * rng.gen_range(1.3..2.6)).round() as usize;
                let x = -(rng.gen_range(0..=side - window) as isize);
                let y = -(rng.gen_range(0..=side - window) as isize);
                render_window(window, x, y, side, identity, &mut rng)
            }
        };
        negatives.push(img);
    }
    (positives, negatives)
}

/// Draws a random single-face frame spec: the face side is in `[min_side, max_side]`.
pub fn random_single_face(
    width: usize,
    height: usize,
    min_side: usize,
    max_side: usize,
    rng: &mut impl Rng,
) -> FrameSpec {
    let side = rng.gen_range(min_side..=max_side.min(width).min(height));
    let x = rng.gen_range(0..=width - side);
    let y = rng.gen_range(0..=height - side);
    let identity = rng.gen_range(0..IDENTITIES);
    FrameSpec::new(width, height).with_face(x, y, side, identity)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_frame_is_noise_only() {
        let (img, truth) = generate_synthetic_frame(&FrameSpec::new(40, 30), 3).unwrap();
        assert!(truth.is_empty());
        assert!(img.data().iter().all(|&v| (v - GROUND).abs() <= 6.0));
    }

    #[test]
    fn planted_face_is_present() {
        let spec = FrameSpec::new(128, 128).with_face(30, 30, 64, 2);
        let (img, truth) = generate_synthetic_frame(&spec, 9).unwrap();
        assert_eq!(truth, vec![Detection { x: 30, y: 30, side: 64, score: 0.0 }]);
        // Eye blob, skin and ground.
        let eye = img.get(30 + 32 - 11, 30 + 32 - 7);
        assert!(eye < 70.0, "eye {eye}");
        assert!(img.get(30 + 32, 30 + 20) > 120.0);
        assert!(img.get(5, 5) < 45.0);
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = FrameSpec::new(90, 70).with_face(10, 5, 50, 4);
        assert_eq!(generate_synthetic_frame(&spec, 11).unwrap(), generate_synthetic_frame(&spec, 11).unwrap());
        assert_ne!(generate_synthetic_frame(&spec, 11).unwrap().0, generate_synthetic_frame(&spec, 12).unwrap().0);
    }

    #[test]
    fn rejects_overlap_and_out_of_frame() {
        let spec = FrameSpec::new(100, 100).with_face(0, 0, 50, 0).with_face(40, 40, 50, 1);
        assert!(generate_synthetic_frame(&spec, 0).is_err());
        let spec = FrameSpec::new(100, 100).with_face(60, 0, 50, 0);
        assert!(generate_synthetic_frame(&spec, 0).is_err());
    }

    #[test]
    fn training_windows_have_window_size() {
        let (p, n) = training_windows(5, 8, 64, 1);
        assert_eq!((p.len(), n.len()), (5, 8));
        assert!(p.iter().chain(&n).all(|w| w.width() == 64 && w.height() == 64));
    }
}
