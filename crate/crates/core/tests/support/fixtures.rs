//! Generator-backed fixtures shared by the integration suites.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rollcall::detector::synth::{render_portrait, training_windows, IDENTITIES};
use rollcall::detector::{generate_synthetic_frame, train_linear, FrameSpec, LinearModel, TrainParams};
use rollcall::hog::{hog_descriptor, HogConfig, HogDescriptor};
use rollcall::image_io::write_gray;

pub const NAMES: [&str; 6] = [
    "HUDAVERDIDEMIR",
    "JOHANNDOP",
    "KANAKCINTILIKCI",
    "AYSEYILMAZ",
    "MEHMETKAYA",
    "ZEYNEPCELIK",
];

pub fn descriptors(windows: &[rollcall::image_io::GrayImage]) -> Vec<HogDescriptor> {
    let cfg = HogConfig::default();
    windows.iter().map(|w| hog_descriptor(w, &cfg).unwrap()).collect()
}

/// 100 positive and 100 negative generator windows, trained with the default schedule.
pub fn desk_model(seed: u64) -> (LinearModel, Vec<HogDescriptor>, Vec<HogDescriptor>) {
    let (pos, neg) = training_windows(100, 100, 64, seed);
    let (pos, neg) = (descriptors(&pos), descriptors(&neg));
    let model = train_linear(&pos, &neg, &TrainParams::default()).unwrap();
    (model, pos, neg)
}

/// Student `i` has id `100 + i`, name `NAMES[i]` and identity texture `i`.
pub fn student(i: u32) -> (u64, &'static str) {
    (100 + i as u64, NAMES[i as usize])
}

/// Writes one 150x150 portrait per identity as `<id>-<NAME>.pgm`.
pub fn write_gallery(dir: &Path, identities: &[u32]) {
    std::fs::create_dir_all(dir).unwrap();
    for &k in identities {
        let (id, name) = student(k);
        let img = render_portrait(k, 150, 6.0, 1000 + k as u64);
        write_gray(&dir.join(format!("{id}-{name}.pgm")), &img).unwrap();
    }
}

pub fn roster_csv(identities: &[u32]) -> String {
    let mut out = String::from("id,name\n");
    for &k in identities {
        let (id, name) = student(k);
        let _ = writeln!(out, "{id},{name}");
    }
    out
}

/// A class session on generated frames with known presence.
pub struct Scenario {
    /// Roster members planted in at least one frame.
    pub present: BTreeSet<u32>,
    /// Frame files (relative to the scenario dir) and their timestamps.
    pub frames: Vec<(String, String)>,
}

/// Roster is identities 0..4, all enrolled. Each of three 320x240 frames holds
/// up to two faces side by side; identity 5 is never enrolled and may appear
/// as a stranger.
pub fn write_scenario(dir: &Path, seed: u64) -> Scenario {
    std::fs::create_dir_all(dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut present = BTreeSet::new();
    let mut frames = Vec::new();
    for f in 0..3u32 {
        let mut spec = FrameSpec::new(320, 240);
        for half in 0..2usize {
            if rng.gen_bool(0.3) {
                continue;
            }
            let identity = if rng.gen_bool(0.15) { IDENTITIES - 1 } else { rng.gen_range(0..4) };
            let side = rng.gen_range(64..=100);
            let x = half * 160 + rng.gen_range(0..=160 - side);
            let y = rng.gen_range(0..=240 - side);
            spec = spec.with_face(x, y, side, identity);
            if identity < 4 {
                present.insert(identity);
            }
        }
        let (img, _) = generate_synthetic_frame(&spec, seed * 31 + f as u64).unwrap();
        let name = format!("frame{f}.pgm");
        write_gray(&dir.join(&name), &img).unwrap();
        frames.push((name, format!("2022-07-13T15:{:02}:{:02}", 50 + f, 7 * f + 3)));
    }
    let mut manifest = String::from("path,timestamp\n");
    for (p, t) in &frames {
        let _ = writeln!(manifest, "{p},{t}");
    }
    std::fs::write(dir.join("manifest.csv"), manifest).unwrap();
    std::fs::write(dir.join("roster.csv"), roster_csv(&[0, 1, 2, 3])).unwrap();
    write_gallery(&dir.join("gallery"), &[0, 1, 2, 3]);
    Scenario { present, frames }
}
