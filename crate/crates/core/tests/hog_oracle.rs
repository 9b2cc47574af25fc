mod support;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rollcall::hog::{hog_descriptor, HogConfig};
use rollcall::image_io::GrayImage;
use support::oracle::{self, OracleConfig};

fn random_image(side: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GrayImage::from_fn(side, side, |_, _| rng.gen_range(0.0..=255.0))
}

/// Integer pixels in `0..=max`, so shifted or scaled copies stay in range.
fn small_image(max: u32, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GrayImage::from_fn(64, 64, |_, _| rng.gen_range(0..=max) as f64)
}

fn to_oracle(cfg: &HogConfig) -> OracleConfig {
    OracleConfig {
        cell: cfg.cell_size,
        bins: cfg.bins,
        block: cfg.block_size,
        stride: cfg.block_stride,
        clip: cfg.clip,
        eps: cfg.epsilon,
    }
}

#[test]
fn matches_oracle_on_random_windows() {
    let cfg = HogConfig::default();
    for seed in 0..20 {
        let img = random_image(64, seed);
        let got = hog_descriptor(&img, &cfg).unwrap().values;
        let want = oracle::descriptor(img.data(), 64, &to_oracle(&cfg));
        let err = oracle::relative_error(&got, &want);
        assert!(err <= 1e-9, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn matches_oracle_on_integer_pixels() {
    // Integer pixels put many gradients exactly on bin centers and on the 180° wrap.
    let cfg = HogConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let img = GrayImage::from_fn(64, 64, |_, _| rng.gen_range(0..4) as f64 * 40.0);
    let got = hog_descriptor(&img, &cfg).unwrap().values;
    let want = oracle::descriptor(img.data(), 64, &to_oracle(&cfg));
    assert!(oracle::relative_error(&got, &want) <= 1e-9);
}

fn config_strategy() -> impl Strategy<Value = HogConfig> {
    (2usize..=8, 2usize..=12, 1usize..=3, 1usize..=2, 2usize..=8).prop_map(
        |(cell_size, bins, block_size, block_stride, cells)| HogConfig {
            cell_size,
            bins,
            block_size: block_size.min(cells),
            block_stride,
            window: cell_size * cells.max(1),
            ..HogConfig::default()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn length_matches_closed_form(cfg in config_strategy(), seed in any::<u64>()) {
        prop_assume!(cfg.window >= 3);
        let img = random_image(cfg.window, seed);
        let d = hog_descriptor(&img, &cfg).unwrap();
        let cells = cfg.window / cfg.cell_size;
        let blocks = (cells - cfg.block_size) / cfg.block_stride + 1;
        prop_assert_eq!(d.values.len(), blocks * blocks * cfg.block_size * cfg.block_size * cfg.bins);
        prop_assert_eq!(d.values.len(), cfg.descriptor_len());
    }

    #[test]
    fn oracle_agrees_for_any_config(cfg in config_strategy(), seed in any::<u64>()) {
        prop_assume!(cfg.window >= 3);
        let img = random_image(cfg.window, seed);
        let got = hog_descriptor(&img, &cfg).unwrap().values;
        let want = oracle::descriptor(img.data(), cfg.window, &to_oracle(&cfg));
        prop_assert!(oracle::relative_error(&got, &want) <= 1e-9);
    }

    #[test]
    fn shift_invariant(seed in any::<u64>(), shift in 0u32..=135) {
        let cfg = HogConfig::default();
        let img = small_image(120, seed);
        let a = hog_descriptor(&img, &cfg).unwrap();
        let b = hog_descriptor(&img.map(|v| v + shift as f64), &cfg).unwrap();
        prop_assert_eq!(a.values, b.values);
    }

    #[test]
    fn scale_invariant(seed in any::<u64>(), k in 0.5f64..4.0) {
        let cfg = HogConfig::default();
        let img = small_image(60, seed);
        let a = hog_descriptor(&img, &cfg).unwrap();
        let b = hog_descriptor(&img.map(|v| v * k), &cfg).unwrap();
        prop_assert!(oracle::relative_error(&b.values, &a.values) <= 1e-9);
    }
}

#[test]
fn representable_shift_is_exact() {
    let cfg = HogConfig::default();
    let img = small_image(200, 5);
    let a = hog_descriptor(&img, &cfg).unwrap();
    let b = hog_descriptor(&img.map(|v| v + 55.0), &cfg).unwrap();
    assert_eq!(a.values, b.values);
    let c = hog_descriptor(&img.map(|v| v + 0.5), &cfg).unwrap();
    assert_eq!(a.values, c.values);
}

fn bin_mass(values: &[f64], bins: usize) -> Vec<f64> {
    let mut mass = vec![0.0; bins];
    for (i, v) in values.iter().enumerate() {
        mass[i % bins] += v;
    }
    mass
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap()
}

#[test]
fn edges_vote_into_axis_bins() {
    let cfg = HogConfig::default();
    // Left/right split: horizontal gradient, 0°.
    let vertical_edge = GrayImage::from_fn(64, 64, |x, _| if x < 30 { 20.0 } else { 200.0 });
    // Top/bottom split: vertical gradient, 90° (bin 90 / 20 = 4.5, shared by bins 4 and 5).
    let horizontal_edge = GrayImage::from_fn(64, 64, |_, y| if y < 30 { 20.0 } else { 200.0 });
    let m = bin_mass(&hog_descriptor(&vertical_edge, &cfg).unwrap().values, 9);
    assert_eq!(argmax(&m), 0);
    assert!(m[0] > 0.99 * m.iter().sum::<f64>());
    let m = bin_mass(&hog_descriptor(&horizontal_edge, &cfg).unwrap().values, 9);
    assert!((m[4] - m[5]).abs() < 1e-12);
    assert!(m[4] + m[5] > 0.99 * m.iter().sum::<f64>());
}
