//! Flat `key=value` configuration text.
//!
//! One pair per line; blank lines and lines starting with `#` are ignored.
//! The same format is used for configuration files, checkpoint headers and
//! the config echo at the top of every output artifact.

use std::fmt::Write as _;

use crate::model::ModelConfig;
use crate::training::TrainConfig;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected key=value, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config key `{key}`: bad value `{value}`")]
    BadValue { key: String, value: String },
}

pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            text: raw.to_string(),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn render_pairs(pairs: &[(&str, String)], prefix: &str) -> String {
    let mut s = String::new();
    for (k, v) in pairs {
        writeln!(s, "{prefix}{k}={v}").unwrap();
    }
    s
}

pub(crate) fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
    })
}

pub(crate) fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
        }),
    }
}

/// Model and training configuration together, as read from a file and
/// overridden on the command line.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    /// Applies `key=value` pairs in order. Keys belong to either the model
    /// or the training configuration.
    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<(), ConfigError> {
        for (k, v) in pairs {
            if !self.model.set(k, v)? && !self.train.set(k, v)? {
                return Err(ConfigError::UnknownKey(k.clone()));
            }
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let mut p = self.model.to_pairs();
        p.extend(self.train.to_pairs());
        p
    }

    pub fn render(&self, prefix: &str) -> String {
        render_pairs(&self.to_pairs(), prefix)
    }
}
