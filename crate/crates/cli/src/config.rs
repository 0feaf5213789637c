//! Settings file and flag resolution. Flags win over the file, the file
//! wins over built-in defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("--seed is required for {0}")]
    MissingSeed(&'static str),
    #[error("pattern width must be 1, 3 or 5, got {0}")]
    Width(usize),
    #[error("error rate must lie in [0, 1], got {0}")]
    ErrorRate(f64),
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum GenBackend {
    Stub,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CorrectorBackend {
    Identity,
    Oracle,
    Http,
}

/// Contents of a `--config` JSON file. Every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub error_rate: Option<f64>,
    pub count: Option<usize>,
    pub top_k: Option<usize>,
    pub beta: Option<f64>,
    pub workers: Option<usize>,
    pub backend: Option<GenBackend>,
    pub corrector: Option<CorrectorBackend>,
    pub attempt_budget: Option<usize>,
    pub stub_drop_rate: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

pub fn check_width(n: usize) -> Result<usize, ConfigError> {
    match n {
        1 | 3 | 5 => Ok(n),
        _ => Err(ConfigError::Width(n)),
    }
}

pub fn check_rate(rate: f64) -> Result<f64, ConfigError> {
    if (0.0..=1.0).contains(&rate) {
        Ok(rate)
    } else {
        Err(ConfigError::ErrorRate(rate))
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        assert_eq!(pick(Some(1), Some(2), 3), 1);
        assert_eq!(pick(None, Some(2), 3), 2);
        assert_eq!(pick(None, None, 3), 3);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<FileConfig>(r#"{"sed": 1}"#).unwrap_err();
        assert!(err.to_string().contains("unknown field"));
    }

    #[test]
    fn validation() {
        assert!(check_width(3).is_ok());
        assert!(check_width(2).is_err());
        assert!(check_rate(1.0).is_ok());
        assert!(check_rate(-0.1).is_err());
    }
}
