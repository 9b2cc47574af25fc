//! Enrolled identities and nearest-neighbour identification under a distance tolerance.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::detector::Detection;
use crate::hog::{hog_descriptor, HogConfig, HogError};
use crate::image_io::{read_image, resize_bilinear, GrayImage, ImageError};

/// Side of the canonical face crop every enrolled photo and query is resampled to.
pub const CANONICAL_SIDE: usize = 150;

pub const DEFAULT_TOLERANCE: f64 = 0.6;

#[derive(Debug, Error, PartialEq)]
pub enum GalleryError {
    #[error("detection {x},{y} side {side} lies outside the {width}x{height} frame")]
    BoxOutside {
        x: usize,
        y: usize,
        side: usize,
        width: usize,
        height: usize,
    },
    #[error("unknown embedding provider {0:?}")]
    UnknownProvider(String),
    #[error("provider {0:?} cannot encode pixels; it only loads precomputed embeddings")]
    CannotEncode(String),
    #[error("embedding provider mismatch: query {query:?}, gallery {gallery:?}")]
    ProviderMismatch { query: String, gallery: String },
    #[error("embedding length mismatch: query {query}, record {record}")]
    LengthMismatch { query: usize, record: usize },
    #[error("duplicate id {0}")]
    DuplicateId(u64),
    #[error("file name {0:?} is not <id>-<NAME>")]
    BadFileName(String),
    #[error("embedding file {path}: {reason}")]
    BadEmbedding { path: String, reason: String },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Hog(#[from] HogError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceEmbedding {
    pub values: Vec<f64>,
    pub provider_tag: String,
}

impl FaceEmbedding {
    pub fn distance(&self, other: &FaceEmbedding) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// One line of space-separated decimals.
    pub fn to_text(&self) -> String {
        let mut s = self
            .values
            .iter()
            .map(|v| format!("{v}"))
            .collect::<Vec<_>>()
            .join(" ");
        s.push('\n');
        s
    }
}

/// Where embeddings come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Provider {
    /// Built in: unit-normalized HOG descriptor of the canonical crop.
    HogEmbed(HogConfig),
    /// Precomputed `.emb` files next to the gallery images.
    File,
}

impl Provider {
    pub fn from_name(name: &str) -> Result<Self, GalleryError> {
        match name {
            "hog-embed" => Ok(Provider::HogEmbed(HogConfig::default())),
            "file" => Ok(Provider::File),
            other => Err(GalleryError::UnknownProvider(other.to_string())),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Provider::HogEmbed(_) => "hog-embed",
            Provider::File => "file",
        }
    }

    /// Embeds a face crop of any size.
    pub fn embed_crop(&self, crop: &GrayImage) -> Result<FaceEmbedding, GalleryError> {
        let config = match self {
            Provider::HogEmbed(config) => config,
            Provider::File => return Err(GalleryError::CannotEncode(self.tag().into())),
        };
        let canonical = resize_bilinear(crop, CANONICAL_SIDE, CANONICAL_SIDE)?;
        let window = resize_bilinear(&canonical, config.window, config.window)?;
        let mut values = hog_descriptor(&window, config)?.values;
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        Ok(FaceEmbedding {
            values,
            provider_tag: self.tag().into(),
        })
    }
}

/// Crops the detection box out of `frame` and embeds it.
pub fn encode_face(
    frame: &GrayImage,
    detection: &Detection,
    provider: &Provider,
) -> Result<FaceEmbedding, GalleryError> {
    let Detection { x, y, side, .. } = *detection;
    if side == 0 || x + side > frame.width() || y + side > frame.height() {
        return Err(GalleryError::BoxOutside {
            x,
            y,
            side,
            width: frame.width(),
            height: frame.height(),
        });
    }
    provider.embed_crop(&frame.crop(x, y, side, side)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceRecord {
    pub id: u64,
    pub name: String,
    pub embedding: FaceEmbedding,
}

impl FaceRecord {
    /// `<id>-<NAME>`, the label used in file names and the attendance sheet.
    pub fn label(&self) -> String {
        format!("{}-{}", self.id, self.name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gallery {
    records: Vec<FaceRecord>,
    provider_tag: String,
}

impl Gallery {
    /// Records are kept in ascending id order.
    pub fn new(mut records: Vec<FaceRecord>, provider_tag: &str) -> Result<Self, GalleryError> {
        records.sort_by_key(|r| r.id);
        for pair in records.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(GalleryError::DuplicateId(pair[0].id));
            }
        }
        for r in &records {
            if !is_valid_name(&r.name) {
                return Err(GalleryError::InvalidRecord(format!("bad name {:?}", r.name)));
            }
            if r.embedding.provider_tag != provider_tag {
                return Err(GalleryError::ProviderMismatch {
                    query: r.embedding.provider_tag.clone(),
                    gallery: provider_tag.into(),
                });
            }
            if r.embedding.values.is_empty() || r.embedding.values.iter().any(|v| !v.is_finite()) {
                return Err(GalleryError::InvalidRecord(format!(
                    "embedding of {} is empty or non-finite",
                    r.label()
                )));
            }
        }
        Ok(Self {
            records,
            provider_tag: provider_tag.into(),
        })
    }

    pub fn records(&self) -> &[FaceRecord] {
        &self.records
    }

    pub fn provider_tag(&self) -> &str {
        &self.provider_tag
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn get(&self, id: u64) -> Option<&FaceRecord> {
        self.records
            .binary_search_by_key(&id, |r| r.id)
            .ok()
            .map(|i| &self.records[i])
    }
}

pub(crate) fn is_valid_name(name: &str) -> bool {
    !name.is_empty() && name.bytes().all(|b| b.is_ascii_uppercase())
}

/// Splits `<id>-<NAME>` (without extension).
pub fn parse_id_name(stem: &str) -> Option<(u64, String)> {
    let (id, name) = stem.split_once('-')?;
    if id.is_empty() || !id.bytes().all(|b| b.is_ascii_digit()) || !is_valid_name(name) {
        return None;
    }
    Some((id.parse().ok()?, name.to_string()))
}

fn io_err(path: &Path, e: std::io::Error) -> GalleryError {
    GalleryError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

pub fn parse_embedding(text: &str, provider_tag: &str, path: &Path) -> Result<FaceEmbedding, GalleryError> {
    let bad = |reason: String| GalleryError::BadEmbedding {
        path: path.display().to_string(),
        reason,
    };
    let line = text.lines().next().unwrap_or("");
    let values = line
        .split_whitespace()
        .map(|s| s.parse::<f64>().map_err(|_| bad(format!("bad number {s:?}"))))
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err(bad("empty embedding".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(bad("non-finite value".into()));
    }
    Ok(FaceEmbedding {
        values,
        provider_tag: provider_tag.into(),
    })
}

/// Lists `<id>-<NAME>.pgm` files in `dir`, sorted by id.
pub fn gallery_images(dir: &Path) -> Result<Vec<(u64, String, PathBuf)>, GalleryError> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
        let path = entry.map_err(|e| io_err(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("pgm") {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let (id, name) = parse_id_name(stem).ok_or_else(|| {
            GalleryError::BadFileName(
                path.file_name()
                    .map(|f| f.to_string_lossy().into_owned())
                    .unwrap_or_default(),
            )
        })?;
        out.push((id, name, path));
    }
    out.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.2.cmp(&b.2)));
    let mut seen = BTreeSet::new();
    for (id, _, _) in &out {
        if !seen.insert(*id) {
            return Err(GalleryError::DuplicateId(*id));
        }
    }
    Ok(out)
}

/// Loads a gallery directory. `hog-embed` embeds each whole image as the face
/// crop; `file` reads the sibling `.emb` files.
pub fn load_gallery(dir: &Path, provider: &Provider) -> Result<Gallery, GalleryError> {
    let mut records = Vec::new();
    let mut dim = None;
    for (id, name, path) in gallery_images(dir)? {
        let embedding = match provider {
            Provider::HogEmbed(_) => provider.embed_crop(&read_image(&path)?.into_gray())?,
            Provider::File => {
                let emb_path = path.with_extension("emb");
                let text = std::fs::read_to_string(&emb_path).map_err(|e| io_err(&emb_path, e))?;
                let emb = parse_embedding(&text, provider.tag(), &emb_path)?;
                match dim {
                    None => dim = Some(emb.values.len()),
                    Some(d) if d != emb.values.len() => {
                        return Err(GalleryError::BadEmbedding {
                            path: emb_path.display().to_string(),
                            reason: format!("{} values, expected {d}", emb.values.len()),
                        })
                    }
                    Some(_) => {}
                }
                emb
            }
        };
        records.push(FaceRecord {
            id,
            name,
            embedding,
        });
    }
    Gallery::new(records, provider.tag())
}

#[derive(Debug, Clone, PartialEq)]
pub enum MatchResult {
    Identified { id: u64, name: String, distance: f64 },
    /// `None` when the gallery is empty.
    Unknown { best_distance: Option<f64> },
}

impl MatchResult {
    pub fn is_identified(&self) -> bool {
        matches!(self, MatchResult::Identified { .. })
    }
}

impl fmt::Display for MatchResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatchResult::Identified { id, name, distance } => {
                write!(f, "IDENTIFIED {id}-{name} {distance:.6}")
            }
            MatchResult::Unknown { best_distance: Some(d) } => write!(f, "UNKNOWN {d:.6}"),
            MatchResult::Unknown { best_distance: None } => write!(f, "UNKNOWN -"),
        }
    }
}

/// Nearest record by Euclidean distance; identified when the distance is at
/// most `tolerance`. Equal distances resolve to the smallest id.
pub fn match_face(
    query: &FaceEmbedding,
    gallery: &Gallery,
    tolerance: f64,
) -> Result<MatchResult, GalleryError> {
    if tolerance.is_nan() || tolerance <= 0.0 {
        return Err(GalleryError::BadTolerance(tolerance));
    }
    if query.provider_tag != gallery.provider_tag {
        return Err(GalleryError::ProviderMismatch {
            query: query.provider_tag.clone(),
            gallery: gallery.provider_tag.clone(),
        });
    }
    let mut best: Option<(&FaceRecord, f64)> = None;
    for r in &gallery.records {
        if r.embedding.values.len() != query.values.len() {
            return Err(GalleryError::LengthMismatch {
                query: query.values.len(),
                record: r.embedding.values.len(),
            });
        }
        let d = query.distance(&r.embedding);
        // Records are id-sorted, so strict improvement keeps the smallest id on ties.
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((r, d));
        }
    }
    Ok(match best {
        Some((r, d)) if d <= tolerance => MatchResult::Identified {
            id: r.id,
            name: r.name.clone(),
            distance: d,
        },
        Some((_, d)) => MatchResult::Unknown {
            best_distance: Some(d),
        },
        None => MatchResult::Unknown { best_distance: None },
    })
}
