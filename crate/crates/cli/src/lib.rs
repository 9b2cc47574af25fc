//! Command implementations behind the `rollcall` binary.
//!
//! Each command returns the process exit code on success (0, or 1 when
//! `detect` finds nothing). Any error maps to exit code 2 in `main`.

pub mod config;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use rollcall::attendance::{run_session, FrameManifest, Roster, SessionSetup};
use rollcall::bench::{emit_report, run_bench, BenchBackend, BenchOptions};
use rollcall::detector::synth::{random_single_face, render_portrait, training_windows, IDENTITIES};
use rollcall::detector::{
    accuracy, detect_with, generate_synthetic_frame, train_linear, LinearModel,
};
use rollcall::gallery::{
    encode_face, load_gallery, match_face, parse_embedding, parse_id_name, Provider, CANONICAL_SIDE,
};
use rollcall::hog::hog_descriptor;
use rollcall::image_io::{read_image, resize_bilinear, write_gray, GrayImage};
use rollcall::par::Execution;

use crate::config::Config;

#[derive(Debug, Parser)]
#[command(name = "rollcall", version, about = "Face-attendance pipeline on netpbm frames")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a gallery of 150x150 face crops and embeddings from `<id>-<NAME>` photos.
    Enroll(EnrollArgs),
    /// Train the linear window classifier from face and non-face images.
    Train(TrainArgs),
    /// Detect faces in one image, optionally identifying them against a gallery.
    Detect(DetectArgs),
    /// Replay a frame manifest and write the attendance sheet.
    Attend(AttendArgs),
    /// Time detection backends over a frame manifest.
    Bench(BenchArgs),
    /// Write a generated demo classroom: training windows, photos, frames, roster.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct EnrollArgs {
    #[arg(long)]
    pub photos: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// `hog-embed` or `file`.
    #[arg(long)]
    pub provider: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub pos: PathBuf,
    #[arg(long)]
    pub neg: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub l2_lambda: Option<f64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub gallery: Option<PathBuf>,
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AttendArgs {
    /// Frame manifest CSV (`path,timestamp`).
    #[arg(long)]
    pub frames: PathBuf,
    #[arg(long)]
    pub roster: Option<PathBuf>,
    #[arg(long)]
    pub gallery: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Session report path; defaults to the CSV path with a `.report.txt` extension.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Session date (YYYY-MM-DD); needed when the manifest is empty.
    #[arg(long)]
    pub date: Option<NaiveDate>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub frames: PathBuf,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Comma-separated: hog, dense, hog-par, dense-par.
    #[arg(long, default_value = "hog,dense", value_delimiter = ',')]
    pub backends: Vec<String>,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value_t = 1)]
    pub warmup: usize,
    /// Report CSV path; printed to standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Training windows per class.
    #[arg(long, default_value_t = 100)]
    pub windows: usize,
    #[arg(long, default_value_t = 6)]
    pub frames: usize,
}

pub fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Enroll(a) => cmd_enroll(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Detect(a) => cmd_detect(&a),
        Command::Attend(a) => cmd_attend(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Synth(a) => cmd_synth(&a),
    }
}

/// `.pgm` and `.ppm` files in `dir`, sorted by file name.
fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or_default();
        if path.is_file() && matches!(ext, "pgm" | "ppm") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn load_model(path: Option<&Path>, config: &Config) -> Result<LinearModel> {
    let path = path.context("a model file is required (--model or `model` in the config)")?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading model {}", path.display()))?;
    let model = LinearModel::from_text(&text).with_context(|| format!("model {}", path.display()))?;
    if config.hog_overridden && model.config != config.hog {
        bail!("model {} was trained with different HOG settings than the config", path.display());
    }
    Ok(model)
}

/// Largest centered square, resized to the canonical side and quantized to 8 bits.
fn canonical_crop(image: &GrayImage) -> Result<GrayImage> {
    let side = image.width().min(image.height());
    let crop = image.crop((image.width() - side) / 2, (image.height() - side) / 2, side, side)?;
    Ok(resize_bilinear(&crop, CANONICAL_SIDE, CANONICAL_SIDE)?.map(f64::round))
}

pub fn cmd_enroll(args: &EnrollArgs) -> Result<u8> {
    let mut config = Config::load(args.config.as_deref())?;
    if let Some(p) = &args.provider {
        config.provider = p.clone();
    }
    let provider = config.provider()?;
    let photos = image_files(&args.photos)?;
    // Validate every name before writing anything.
    let mut plan = Vec::with_capacity(photos.len());
    let mut seen = BTreeSet::new();
    for path in &photos {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let Some((id, name)) = parse_id_name(stem) else {
            bail!("{}: expected <id>-<NAME> with an uppercase ASCII name", file_name(path));
        };
        if !seen.insert(id) {
            bail!("{}: duplicate id {id}", file_name(path));
        }
        plan.push((id, name, path));
    }
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut written: Vec<PathBuf> = Vec::new();
    let result = (|| -> Result<()> {
        for (id, name, path) in &plan {
            let label = format!("{id}-{name}");
            let crop = canonical_crop(&read_image(path)?.into_gray())
                .with_context(|| file_name(path))?;
            let embedding = match &provider {
                Provider::File => {
                    let src = path.with_extension("emb");
                    let text = std::fs::read_to_string(&src)
                        .with_context(|| format!("{}: missing embedding {}", file_name(path), src.display()))?;
                    parse_embedding(&text, provider.tag(), &src)?
                }
                p => p.embed_crop(&crop)?,
            };
            let img_out = args.out.join(format!("{label}.pgm"));
            write_gray(&img_out, &crop)?;
            written.push(img_out);
            let emb_out = args.out.join(format!("{label}.emb"));
            std::fs::write(&emb_out, embedding.to_text())?;
            written.push(emb_out);
            println!("enrolled {label} from {}", file_name(path));
        }
        Ok(())
    })();
    if let Err(e) = result {
        for p in &written {
            let _ = std::fs::remove_file(p);
        }
        return Err(e);
    }
    println!("{} identities enrolled into {}", plan.len(), args.out.display());
    Ok(0)
}

fn training_set(dir: &Path, window: usize) -> Result<Vec<GrayImage>> {
    image_files(dir)?
        .iter()
        .map(|p| {
            let img = read_image(p)?.into_gray();
            let img = if img.width() == window && img.height() == window {
                img
            } else {
                resize_bilinear(&img, window, window)?
            };
            Ok(img)
        })
        .collect()
}

pub fn cmd_train(args: &TrainArgs) -> Result<u8> {
    let config = Config::load(args.config.as_deref())?;
    let mut params = config.train;
    params.seed = args.seed.unwrap_or(params.seed);
    params.epochs = args.epochs.unwrap_or(params.epochs);
    params.learning_rate = args.learning_rate.unwrap_or(params.learning_rate);
    params.l2_lambda = args.l2_lambda.unwrap_or(params.l2_lambda);
    let describe = |dir: &Path| -> Result<Vec<_>> {
        let windows = training_set(dir, config.hog.window)?;
        if windows.is_empty() {
            bail!("no .pgm/.ppm images in {}", dir.display());
        }
        windows
            .iter()
            .map(|w| Ok(hog_descriptor(w, &config.hog)?))
            .collect()
    };
    let pos = describe(&args.pos)?;
    let neg = describe(&args.neg)?;
    let model = train_linear(&pos, &neg, &params)?;
    std::fs::write(&args.out, model.to_text()).with_context(|| format!("writing {}", args.out.display()))?;
    println!(
        "trained on {} positive and {} negative windows; accuracy {:.4}",
        pos.len(),
        neg.len(),
        accuracy(&model, &pos, &neg)
    );
    Ok(0)
}

pub fn cmd_detect(args: &DetectArgs) -> Result<u8> {
    let config = Config::load(args.config.as_deref())?;
    let model = load_model(args.model.as_deref().or(config.model.as_deref()), &config)?;
    let image = read_image(&args.image)
        .with_context(|| format!("reading {}", args.image.display()))?
        .into_gray();
    let tolerance = args.tolerance.unwrap_or(config.tolerance);
    let gallery = match args.gallery.as_deref().or(config.gallery.as_deref()) {
        Some(dir) => {
            let provider = config.provider()?;
            let g = load_gallery(dir, &provider).with_context(|| format!("gallery {}", dir.display()))?;
            Some((g, provider))
        }
        None => None,
    };
    let detections = detect_with(&image, &model, &config.detect, Execution::best_available())?;
    let mut stdout = std::io::stdout().lock();
    for d in &detections {
        writeln!(stdout, "{} {} {} {:.6}", d.x, d.y, d.side, d.score)?;
        if let Some((g, provider)) = &gallery {
            let embedding = encode_face(&image, d, provider)?;
            writeln!(stdout, "{}", match_face(&embedding, g, tolerance)?)?;
        }
    }
    Ok(if detections.is_empty() { 1 } else { 0 })
}

pub fn cmd_attend(args: &AttendArgs) -> Result<u8> {
    let config = Config::load(args.config.as_deref())?;
    let model = load_model(args.model.as_deref().or(config.model.as_deref()), &config)?;
    let roster_path = args
        .roster
        .as_deref()
        .or(config.roster.as_deref())
        .context("a roster is required (--roster or `roster` in the config)")?;
    let roster = Roster::load(roster_path)?;
    let gallery_dir = args
        .gallery
        .as_deref()
        .or(config.gallery.as_deref())
        .context("a gallery is required (--gallery or `gallery` in the config)")?;
    let provider = config.provider()?;
    let gallery = load_gallery(gallery_dir, &provider).with_context(|| format!("gallery {}", gallery_dir.display()))?;
    let manifest = FrameManifest::load(&args.frames)?;
    let setup = SessionSetup {
        roster: &roster,
        gallery: &gallery,
        model: &model,
        params: config.detect,
        tolerance: args.tolerance.unwrap_or(config.tolerance),
        provider,
        session_date: args.date,
        exec: Execution::best_available(),
    };
    let outcome = run_session(&manifest, &setup)?;
    std::fs::write(&args.out, outcome.ledger.export_csv()?)
        .with_context(|| format!("writing {}", args.out.display()))?;
    let report_path = args
        .report
        .clone()
        .unwrap_or_else(|| args.out.with_extension("report.txt"));
    std::fs::write(&report_path, outcome.report.to_text())
        .with_context(|| format!("writing {}", report_path.display()))?;
    let present = outcome
        .ledger
        .roster_entries()?
        .iter()
        .filter(|e| e.time.is_some())
        .count();
    println!(
        "{present}/{} present, {} unknown faces, {} warnings; sheet {}",
        roster.entries().len(),
        outcome.report.unknown_count(),
        outcome.report.warning_count(),
        args.out.display()
    );
    Ok(0)
}

pub fn cmd_bench(args: &BenchArgs) -> Result<u8> {
    let backends = args
        .backends
        .iter()
        .map(|n| BenchBackend::from_name(n.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    let config = Config::default();
    let model = load_model(args.model.as_deref(), &config)?;
    let manifest = FrameManifest::load(&args.frames)?;
    let frames = manifest
        .rows
        .iter()
        .map(|r| {
            read_image(&r.path)
                .map(|i| i.into_gray())
                .with_context(|| format!("reading {}", r.path.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    let options = BenchOptions {
        warmup: args.warmup,
        repeats: args.repeats,
        verbose: args.verbose,
    };
    let reports = backends
        .iter()
        .map(|b| run_bench(b, &frames, &model, &options))
        .collect::<Result<Vec<_>, _>>()?;
    let csv = emit_report(&reports);
    match &args.out {
        Some(path) => std::fs::write(path, &csv).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(&csv)?,
    }
    Ok(0)
}

const DEMO_NAMES: [&str; 4] = ["HUDAVERDIDEMIR", "JOHANNDOP", "KANAKCINTILIKCI", "AYSEYILMAZ"];

pub fn cmd_synth(args: &SynthArgs) -> Result<u8> {
    use rand::SeedableRng;
    let out = &args.out;
    for sub in ["train/pos", "train/neg", "photos", "frames"] {
        std::fs::create_dir_all(out.join(sub))?;
    }
    let (pos, neg) = training_windows(args.windows, args.windows, 64, args.seed);
    for (dir, set) in [("train/pos", &pos), ("train/neg", &neg)] {
        for (i, w) in set.iter().enumerate() {
            write_gray(&out.join(dir).join(format!("{i:04}.pgm")), w)?;
        }
    }
    let mut roster = String::from("id,name\n");
    for (k, name) in DEMO_NAMES.iter().enumerate() {
        let id = 100 + k;
        let portrait = render_portrait(k as u32, 180, 6.0, args.seed ^ (1000 + k as u64));
        write_gray(&out.join("photos").join(format!("{id}-{name}.pgm")), &portrait)?;
        let _ = writeln!(roster, "{id},{name}");
    }
    std::fs::write(out.join("roster.csv"), roster)?;
    // The last roster student never shows up; identity IDENTITIES-1 is a visitor.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed);
    let mut manifest = String::from("path,timestamp\n");
    for f in 0..args.frames {
        let identity = match f % 4 {
            3 => IDENTITIES - 1,
            k => k as u32,
        };
        let mut spec = random_single_face(320, 240, 64, 110, &mut rng);
        spec.faces[0].identity = identity;
        let (img, _) = generate_synthetic_frame(&spec, args.seed.wrapping_mul(97) + f as u64)?;
        let name = format!("frame{f:03}.pgm");
        write_gray(&out.join("frames").join(&name), &img)?;
        let secs = 15 * 3600 + 50 * 60 + 13 * f as u32;
        let _ = writeln!(
            manifest,
            "frames/{name},2022-07-13T{:02}:{:02}:{:02}",
            secs / 3600,
            secs / 60 % 60,
            secs % 60
        );
    }
    std::fs::write(out.join("manifest.csv"), manifest)?;
    println!("demo classroom written to {}", out.display());
    Ok(0)
}
