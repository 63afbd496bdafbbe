//! JSON training configuration with field-level validation.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// A validation failure naming the offending field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossName {
    Ccl,
    Nsoftmax,
    Proxynca,
    CrossEntropy,
    CenterLoss,
    MarginContrastive,
    #[serde(rename = "infonce-batch")]
    InfonceBatch,
}

impl LossName {
    pub fn as_str(self) -> &'static str {
        match self {
            LossName::Ccl => "ccl",
            LossName::Nsoftmax => "nsoftmax",
            LossName::Proxynca => "proxynca",
            LossName::CrossEntropy => "cross_entropy",
            LossName::CenterLoss => "center_loss",
            LossName::MarginContrastive => "margin_contrastive",
            LossName::InfonceBatch => "infonce-batch",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_owned())).ok()
    }

    pub fn uses_margin(self) -> bool {
        matches!(self, LossName::Ccl | LossName::MarginContrastive)
    }

    pub fn uses_lambda(self) -> bool {
        matches!(self, LossName::Ccl | LossName::CenterLoss)
    }

    /// Losses scoring samples against normalized class centers.
    pub fn uses_center_bank(self) -> bool {
        matches!(self, LossName::Ccl | LossName::Nsoftmax | LossName::Proxynca | LossName::MarginContrastive)
    }

    pub fn uses_classifier(self) -> bool {
        matches!(self, LossName::CrossEntropy | LossName::CenterLoss)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterModeName {
    Gradient,
    Stopgrad,
    Momentum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerName {
    SgdNesterov,
    Adamw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerName,
    pub learning_rate: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_betas")]
    pub betas: (f64, f64),
    #[serde(default = "default_adam_eps")]
    pub eps: f64,
}

fn default_momentum() -> f64 {
    0.9
}

fn default_betas() -> (f64, f64) {
    (0.9, 0.999)
}

fn default_adam_eps() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Train classes plus disjoint test classes on the unit sphere.
    Synthetic {
        train_classes: usize,
        test_classes: usize,
        dim: usize,
        samples_per_class: usize,
        spread: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// IDX image and label files; without test files a stratified
    /// `holdout` fraction becomes the test split.
    Mnist {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default)]
        test_images: Option<PathBuf>,
        #[serde(default)]
        test_labels: Option<PathBuf>,
        #[serde(default = "default_holdout")]
        holdout: f64,
    },
}

fn default_holdout() -> f64 {
    0.2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKindName {
    Symmetric,
    LongTail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub kind: NoiseKindName,
    pub rate: f64,
    #[serde(default = "default_subclusters")]
    pub subclusters: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_subclusters() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub loss: LossName,
    #[serde(default = "default_s")]
    pub s: f64,
    #[serde(default)]
    pub m: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default = "default_center_mode")]
    pub center_mode: CenterModeName,
    #[serde(default)]
    pub mu: Option<f64>,
    /// Renormalize stored centers after each stop-gradient step.
    #[serde(default)]
    pub renormalize: bool,
    pub layer_dims: Vec<usize>,
    #[serde(default)]
    pub dropout: f64,
    pub optimizer: OptimizerConfig,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
    #[serde(default = "default_ks")]
    pub ks: Vec<usize>,
}

fn default_s() -> f64 {
    16.0
}

fn default_center_mode() -> CenterModeName {
    CenterModeName::Gradient
}

fn default_batch_size() -> usize {
    128
}

fn default_ks() -> Vec<usize> {
    vec![1, 2, 4]
}

fn check(ok: bool, field: &str, message: &str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::new(field, message))
    }
}

fn finite_nonneg(v: f64) -> bool {
    v.is_finite() && v >= 0.0
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError::new("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Canonical serialization, also the input of the run hash.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let loss = self.loss;
        check(self.s.is_finite() && self.s > 0.0, "s", "must be positive and finite")?;
        check((0.0..1.0).contains(&self.m), "m", "must lie in [0, 1)")?;
        check(self.m == 0.0 || loss.uses_margin(), "m", &format!("has no effect on loss {}", loss.as_str()))?;
        check(finite_nonneg(self.lambda), "lambda", "must be non-negative and finite")?;
        check(self.lambda == 0.0 || loss.uses_lambda(), "lambda", &format!("has no effect on loss {}", loss.as_str()))?;
        check((0.0..1.0).contains(&self.epsilon), "epsilon", "must lie in [0, 1)")?;
        check(self.epsilon == 0.0 || loss == LossName::Ccl, "epsilon", "label smoothing is only supported by ccl")?;

        match self.center_mode {
            CenterModeName::Gradient => {}
            CenterModeName::Stopgrad | CenterModeName::Momentum => {
                check(loss == LossName::Ccl, "center_mode", "stopgrad and momentum need the ccl center term")?
            }
        }
        match (self.center_mode, self.mu) {
            (CenterModeName::Momentum, Some(mu)) => check((0.0..=1.0).contains(&mu), "mu", "must lie in [0, 1]")?,
            (CenterModeName::Momentum, None) => return Err(ConfigError::new("mu", "required with center_mode momentum")),
            (_, Some(_)) => return Err(ConfigError::new("mu", "only valid with center_mode momentum")),
            (_, None) => {}
        }
        check(
            !self.renormalize || self.center_mode == CenterModeName::Stopgrad,
            "renormalize",
            "only valid with center_mode stopgrad",
        )?;

        check(self.layer_dims.len() >= 2, "layer_dims", "needs an input and an output width")?;
        check(self.layer_dims.iter().all(|&w| w > 0), "layer_dims", "widths must be positive")?;
        check(
            *self.layer_dims.last().unwrap() >= 2 || !loss.uses_center_bank(),
            "layer_dims",
            "embedding width must be at least 2",
        )?;
        check((0.0..1.0).contains(&self.dropout), "dropout", "must lie in [0, 1)")?;

        let opt = &self.optimizer;
        check(opt.learning_rate.is_finite() && opt.learning_rate > 0.0, "optimizer.learning_rate", "must be positive")?;
        check(finite_nonneg(opt.weight_decay), "optimizer.weight_decay", "must be non-negative")?;
        check((0.0..1.0).contains(&opt.momentum), "optimizer.momentum", "must lie in [0, 1)")?;
        check((0.0..1.0).contains(&opt.betas.0) && (0.0..1.0).contains(&opt.betas.1), "optimizer.betas", "must lie in [0, 1)")?;
        check(opt.eps.is_finite() && opt.eps > 0.0, "optimizer.eps", "must be positive")?;

        check(self.batch_size >= 1, "batch_size", "must be at least 1")?;
        check(!self.ks.is_empty(), "ks", "must not be empty")?;
        check(self.ks.iter().all(|&k| k >= 1), "ks", "entries must be at least 1")?;
        check(self.ks.windows(2).all(|w| w[0] < w[1]), "ks", "must be strictly ascending")?;

        match &self.dataset {
            DatasetConfig::Synthetic { train_classes, dim, samples_per_class, spread, .. } => {
                check(*train_classes >= 2, "dataset.train_classes", "must be at least 2")?;
                check(*dim >= 2, "dataset.dim", "must be at least 2")?;
                check(*samples_per_class >= 2, "dataset.samples_per_class", "must be at least 2")?;
                check(finite_nonneg(*spread), "dataset.spread", "must be non-negative")?;
                check(self.layer_dims[0] == *dim, "layer_dims", "first width must equal dataset.dim")?;
            }
            DatasetConfig::Mnist { test_images, test_labels, holdout, .. } => {
                check(
                    test_images.is_some() == test_labels.is_some(),
                    "dataset.test_images",
                    "test_images and test_labels go together",
                )?;
                check(*holdout > 0.0 && *holdout < 1.0, "dataset.holdout", "must lie in (0, 1)")?;
            }
        }
        if let Some(noise) = &self.noise {
            check((0.0..=1.0).contains(&noise.rate), "noise.rate", "must lie in [0, 1]")?;
            check(noise.subclusters >= 1, "noise.subclusters", "must be at least 1")?;
        }
        Ok(())
    }
}
