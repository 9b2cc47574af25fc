//! Optional `key = value` settings file. Flags given on the command line win.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rollcall::detector::{DetectParams, TrainParams};
use rollcall::gallery::{Provider, DEFAULT_TOLERANCE};
use rollcall::hog::HogConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub hog: HogConfig,
    /// True when the file set any HOG key; a model's own settings are checked against it.
    pub hog_overridden: bool,
    pub detect: DetectParams,
    pub train: TrainParams,
    pub tolerance: f64,
    pub provider: String,
    pub model: Option<PathBuf>,
    pub gallery: Option<PathBuf>,
    pub roster: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            hog: HogConfig::default(),
            hog_overridden: false,
            detect: DetectParams::default(),
            train: TrainParams::default(),
            tolerance: DEFAULT_TOLERANCE,
            provider: "hog-embed".into(),
            model: None,
            gallery: None,
            roster: None,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow!("{key}: cannot parse {value:?}: {e}"))
}

impl Config {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut c = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value", i + 1))?;
            let (key, value) = (key.trim(), value.trim());
            let path = || base.join(value);
            match key {
                "cell_size" => c.hog.cell_size = num(key, value)?,
                "bins" => c.hog.bins = num(key, value)?,
                "block_size" => c.hog.block_size = num(key, value)?,
                "block_stride" => c.hog.block_stride = num(key, value)?,
                "clip" => c.hog.clip = num(key, value)?,
                "epsilon" => c.hog.epsilon = num(key, value)?,
                "window" => c.hog.window = num(key, value)?,
                "score_threshold" => c.detect.score_threshold = num(key, value)?,
                "window_stride" => c.detect.window_stride = num(key, value)?,
                "scale_step" => c.detect.scale_step = num(key, value)?,
                "nms_iou" => c.detect.nms_iou = num(key, value)?,
                "epochs" => c.train.epochs = num(key, value)?,
                "learning_rate" => c.train.learning_rate = num(key, value)?,
                "l2_lambda" => c.train.l2_lambda = num(key, value)?,
                "seed" => c.train.seed = num(key, value)?,
                "tolerance" => c.tolerance = num(key, value)?,
                "provider" => c.provider = value.to_string(),
                "model" => c.model = Some(path()),
                "gallery" => c.gallery = Some(path()),
                "roster" => c.roster = Some(path()),
                other => bail!("line {}: unknown key {other:?}", i + 1),
            }
            if matches!(
                key,
                "cell_size" | "bins" | "block_size" | "block_stride" | "clip" | "epsilon" | "window"
            ) {
                c.hog_overridden = true;
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base).with_context(|| format!("config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        self.hog.validate()?;
        self.detect.validate()?;
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            bail!("tolerance {} must be positive", self.tolerance);
        }
        let (lr, lambda) = (self.train.learning_rate, self.train.l2_lambda);
        if self.train.epochs == 0 || lr.is_nan() || lr <= 0.0 || lambda.is_nan() || lambda < 0.0 {
            bail!("epochs and learning_rate must be positive, l2_lambda non-negative");
        }
        self.provider()?;
        Ok(())
    }

    /// The embedding provider, using this config's HOG settings for `hog-embed`.
    pub fn provider(&self) -> Result<Provider> {
        Ok(match Provider::from_name(&self.provider)? {
            Provider::HogEmbed(_) => Provider::HogEmbed(self.hog),
            p => p,
        })
    }
}
