//! Brute-force HOG written against raw pixel buffers.
//!
//! Every block recomputes its cells from scratch, every pixel votes into every
//! bin through a triangular kernel on the circular angle distance. Nothing is
//! shared with the library beyond the config values.

#![allow(dead_code)]

pub struct OracleConfig {
    pub cell: usize,
    pub bins: usize,
    pub block: usize,
    pub stride: usize,
    pub clip: f64,
    pub eps: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { cell: 8, bins: 9, block: 2, stride: 1, clip: 0.2, eps: 1e-5 }
    }
}

fn px(img: &[f64], w: usize, h: usize, x: i64, y: i64) -> f64 {
    let x = x.clamp(0, w as i64 - 1) as usize;
    let y = y.clamp(0, h as i64 - 1) as usize;
    img[y * w + x]
}

fn angle_and_magnitude(img: &[f64], w: usize, h: usize, x: usize, y: usize) -> (f64, f64) {
    let (x, y) = (x as i64, y as i64);
    let gx = px(img, w, h, x + 1, y) - px(img, w, h, x - 1, y);
    let gy = px(img, w, h, x, y + 1) - px(img, w, h, x, y - 1);
    let mag = gx.hypot(gy);
    let mut deg = gy.atan2(gx).to_degrees();
    while deg < 0.0 {
        deg += 180.0;
    }
    while deg >= 180.0 {
        deg -= 180.0;
    }
    (deg, mag)
}

fn bin_weight(angle: f64, bin: usize, bins: usize) -> f64 {
    let width = 180.0 / bins as f64;
    let center = bin as f64 * width;
    let d = (angle - center).abs();
    let d = d.min(180.0 - d);
    (1.0 - d / width).max(0.0)
}

fn cell_histogram(img: &[f64], w: usize, h: usize, cx: usize, cy: usize, cfg: &OracleConfig) -> Vec<f64> {
    let mut hist = vec![0.0; cfg.bins];
    for y in cy * cfg.cell..(cy + 1) * cfg.cell {
        for x in cx * cfg.cell..(cx + 1) * cfg.cell {
            let (angle, mag) = angle_and_magnitude(img, w, h, x, y);
            for (b, slot) in hist.iter_mut().enumerate() {
                *slot += mag * bin_weight(angle, b, cfg.bins);
            }
        }
    }
    hist
}

fn normalize(v: &[f64], cfg: &OracleConfig) -> Vec<f64> {
    let norm = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() + cfg.eps * cfg.eps).sqrt();
    let n1 = norm(v);
    let clipped: Vec<f64> = v.iter().map(|x| (x / n1).min(cfg.clip)).collect();
    let n2 = norm(&clipped);
    clipped.iter().map(|x| x / n2).collect()
}

/// Descriptor of a square `side x side` window stored row-major.
pub fn descriptor(img: &[f64], side: usize, cfg: &OracleConfig) -> Vec<f64> {
    assert_eq!(img.len(), side * side);
    let cells = side / cfg.cell;
    let blocks = (cells - cfg.block) / cfg.stride + 1;
    let mut out = Vec::new();
    for by in 0..blocks {
        for bx in 0..blocks {
            let mut block = Vec::new();
            for j in 0..cfg.block {
                for i in 0..cfg.block {
                    block.extend(cell_histogram(
                        img,
                        side,
                        side,
                        bx * cfg.stride + i,
                        by * cfg.stride + j,
                        cfg,
                    ));
                }
            }
            out.extend(normalize(&block, cfg));
        }
    }
    out
}

/// Largest element-wise error relative to the oracle's largest magnitude.
pub fn relative_error(got: &[f64], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len());
    let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    got.iter()
        .zip(want)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / scale
}
