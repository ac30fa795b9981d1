//! Flat `key = value` run configuration.

use std::fmt;
use std::path::{Path, PathBuf};

use dbnt::dbn::parse_layer_sizes;
use dbnt::finetune::FinetuneConfig;
use dbnt::rbm::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
pub struct Paths {
    pub raw: Option<PathBuf>,
    pub vocab: PathBuf,
    pub train: PathBuf,
    pub test: PathBuf,
    /// Corpus to encode or project; the test split when unset.
    pub corpus: Option<PathBuf>,
    pub dbn: PathBuf,
    pub model: PathBuf,
    pub codes: PathBuf,
    /// Standard output when unset.
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub layer_sizes: Vec<usize>,
    pub vocab_size: usize,
    pub train_fraction: f64,
    pub pretrain: TrainConfig,
    pub finetune: FinetuneConfig,
    pub noise_enabled: bool,
    pub binarize: bool,
    pub threshold: f64,
    pub ks: Vec<usize>,
    pub seed: u64,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            layer_sizes: vec![2000, 500, 250, 125, 10],
            vocab_size: 2000,
            train_fraction: 0.7,
            pretrain: TrainConfig::default(),
            finetune: FinetuneConfig::default(),
            noise_enabled: false,
            binarize: false,
            threshold: dbnt::codes::DEFAULT_THRESHOLD,
            ks: dbnt::eval::DEFAULT_KS.to_vec(),
            seed: 0,
            paths: Paths {
                raw: None,
                vocab: "vocab.txt".into(),
                train: "train.bow".into(),
                test: "test.bow".into(),
                corpus: None,
                dbn: "model.dbn".into(),
                model: "model.ae".into(),
                codes: "codes.txt".into(),
                output: None,
            },
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .parse()
        .map_err(|_| ConfigError(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(ConfigError(format!("{key}: expected true or false, got {value:?}"))),
    }
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| value.into())
}

pub fn parse_ks(value: &str) -> Result<Vec<usize>, ConfigError> {
    let ks: Vec<usize> = value
        .split(',')
        .map(|k| parse::<usize>("eval.ks", k.trim()))
        .collect::<Result<_, _>>()?;
    if ks.is_empty() || ks.contains(&0) {
        return Err(ConfigError(format!("eval.ks: neighbor counts must be >= 1, got {value:?}")));
    }
    Ok(ks)
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key.trim() {
            "layer_sizes" => {
                self.layer_sizes = parse_layer_sizes(v).map_err(|e| ConfigError(format!("layer_sizes: {e}")))?
            }
            "vocab_size" => self.vocab_size = parse(key, v)?,
            "split.train_fraction" => self.train_fraction = parse(key, v)?,
            "pretrain.learning_rate" => self.pretrain.learning_rate = parse(key, v)?,
            "pretrain.momentum" => self.pretrain.momentum = parse(key, v)?,
            "pretrain.weight_decay" => self.pretrain.weight_decay = parse(key, v)?,
            "pretrain.epochs" => self.pretrain.epochs = parse(key, v)?,
            "pretrain.batch_size" => self.pretrain.batch_size = parse(key, v)?,
            "finetune.epochs" => self.finetune.epochs = parse(key, v)?,
            "finetune.batch_size" => self.finetune.batch_size = parse(key, v)?,
            "finetune.line_searches" => self.finetune.line_searches = parse(key, v)?,
            "noise.enabled" => self.noise_enabled = parse_bool(key, v)?,
            "noise.variance" => self.finetune.noise_variance = parse(key, v)?,
            "binarize.enabled" => self.binarize = parse_bool(key, v)?,
            "binarize.threshold" => self.threshold = parse(key, v)?,
            "eval.ks" => self.ks = parse_ks(v)?,
            "seed" => self.seed = parse(key, v)?,
            "paths.raw" => self.paths.raw = optional_path(v),
            "paths.vocab" => self.paths.vocab = v.into(),
            "paths.train" => self.paths.train = v.into(),
            "paths.test" => self.paths.test = v.into(),
            "paths.corpus" => self.paths.corpus = optional_path(v),
            "paths.dbn" => self.paths.dbn = v.into(),
            "paths.model" => self.paths.model = v.into(),
            "paths.codes" => self.paths.codes = v.into(),
            "paths.output" => self.paths.output = optional_path(v),
            other => return Err(ConfigError(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key=value`.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), ConfigError> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("expected key=value, got {pair:?}")))?;
        self.set(k, v)
    }

    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            self.set_pair(line)
                .map_err(|e| ConfigError(format!("{origin}:{}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Checks values against the owning modules' preconditions.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let wrap = |e: dbnt::Error| ConfigError(e.to_string());
        self.pretrain.validate().map_err(wrap)?;
        self.finetune.validate().map_err(wrap)?;
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(ConfigError(format!(
                "split.train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.vocab_size == 0 {
            return Err(ConfigError("vocab_size must be >= 1".into()));
        }
        if !self.threshold.is_finite() {
            return Err(ConfigError("binarize.threshold must be finite".into()));
        }
        Ok(())
    }

    pub fn seeded(&self) -> (TrainConfig, FinetuneConfig) {
        (
            TrainConfig {
                seed: self.seed,
                ..self.pretrain.clone()
            },
            FinetuneConfig {
                seed: self.seed,
                ..self.finetune.clone()
            },
        )
    }
}
