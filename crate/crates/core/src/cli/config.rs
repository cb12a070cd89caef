//! Plain-text run configuration.
//!
//! One `key = value` pair per line; blank lines and lines starting with `#`
//! are ignored. Keys are dotted (`ae.epochs`, `eval.dims`), lists are
//! comma-separated and path values are taken relative to the file's
//! directory. Unknown keys and repeated keys are errors.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::autoenc::Activation;
use crate::eval::ClassifierKind;
use crate::traffic_synth::Preset;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{path}: {reason}")]
    Read { path: String, reason: String },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: `{key}` set twice")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {reason}")]
    BadValue { line: usize, key: String, reason: String },
}

/// Every key a config file may set. Unset keys fall back to built-in
/// defaults; command-line flags win over both.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub scenario_preset: Option<Preset>,
    pub preprocess_plan: Option<PathBuf>,
    pub preprocess_categorical: Option<Vec<String>>,
    pub preprocess_exclude: Option<Vec<String>>,
    pub preprocess_strict_labels: Option<bool>,
    pub ae_latent_dim: Option<usize>,
    pub ae_hidden: Option<Vec<usize>>,
    pub ae_epochs: Option<usize>,
    pub ae_batch_size: Option<usize>,
    pub ae_learning_rate: Option<f64>,
    pub ae_output_activation: Option<Activation>,
    pub trees_classifier: Option<ClassifierKind>,
    pub trees_balanced: Option<bool>,
    pub eval_dims: Option<Vec<usize>>,
    pub eval_classifiers: Option<Vec<ClassifierKind>>,
    pub eval_k_folds: Option<usize>,
    pub eval_test_fraction: Option<f64>,
    pub eval_jobs: Option<usize>,
}

pub const KEYS: [&str; 19] = [
    "seed",
    "scenario.preset",
    "preprocess.plan",
    "preprocess.categorical",
    "preprocess.exclude",
    "preprocess.strict_labels",
    "ae.latent_dim",
    "ae.hidden",
    "ae.epochs",
    "ae.batch_size",
    "ae.learning_rate",
    "ae.output_activation",
    "trees.classifier",
    "trees.balanced",
    "eval.dims",
    "eval.classifiers",
    "eval.k_folds",
    "eval.test_fraction",
    "eval.jobs",
];

fn one<T: FromStr>(value: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| e.to_string())
}

/// Comma-separated list; empty items are errors, an empty value is an empty list.
pub fn parse_list<T: FromStr>(value: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|item| one(item.trim())).collect()
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base)
    }

    /// Parses config text, resolving relative paths against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<&str> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or(ConfigError::Syntax { line })?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(ConfigError::Syntax { line });
            }
            let Some(&known) = KEYS.iter().find(|k| **k == key) else {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                });
            };
            if seen.contains(&known) {
                return Err(ConfigError::DuplicateKey {
                    line,
                    key: key.to_string(),
                });
            }
            seen.push(known);
            cfg.set(known, value, base).map_err(|reason| ConfigError::BadValue {
                line,
                key: key.to_string(),
                reason,
            })?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<(), String> {
        match key {
            "seed" => self.seed = Some(one(value)?),
            "scenario.preset" => self.scenario_preset = Some(one(value)?),
            "preprocess.plan" => {
                if value.is_empty() {
                    return Err("empty path".into());
                }
                self.preprocess_plan = Some(base.join(value));
            }
            "preprocess.categorical" => self.preprocess_categorical = Some(parse_list(value)?),
            "preprocess.exclude" => self.preprocess_exclude = Some(parse_list(value)?),
            "preprocess.strict_labels" => self.preprocess_strict_labels = Some(one(value)?),
            "ae.latent_dim" => self.ae_latent_dim = Some(one(value)?),
            "ae.hidden" => self.ae_hidden = Some(parse_list(value)?),
            "ae.epochs" => self.ae_epochs = Some(one(value)?),
            "ae.batch_size" => self.ae_batch_size = Some(one(value)?),
            "ae.learning_rate" => self.ae_learning_rate = Some(one(value)?),
            "ae.output_activation" => self.ae_output_activation = Some(one(value)?),
            "trees.classifier" => self.trees_classifier = Some(one(value)?),
            "trees.balanced" => self.trees_balanced = Some(one(value)?),
            "eval.dims" => self.eval_dims = Some(parse_list(value)?),
            "eval.classifiers" => self.eval_classifiers = Some(parse_list(value)?),
            "eval.k_folds" => self.eval_k_folds = Some(one(value)?),
            "eval.test_fraction" => {
                let f: f64 = one(value)?;
                if !(f > 0.0 && f < 1.0) {
                    return Err("must lie strictly between 0 and 1".into());
                }
                self.eval_test_fraction = Some(f);
            }
            "eval.jobs" => self.eval_jobs = Some(one(value)?),
            _ => unreachable!("key list and setter disagree on `{key}`"),
        }
        Ok(())
    }
}
