//! Flat `key = value` configuration.
//!
//! One key per line, `#` starts a comment, blank lines are ignored, lists
//! are comma-separated. Keys may appear once per file; `--set` overrides
//! replace file values.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected key=value, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: duplicate key `{key}` (first set on line {first})")]
    Duplicate { key: String, line: usize, first: usize },
    #[error("unknown key `{key}` for {command}")]
    UnknownKey { key: String, command: &'static str },
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("key `{key}`: expected {expected}, got `{value}`")]
    Type {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("key `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("override `{0}`: expected key=value")]
    Override(String),
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Source {
    Line(usize),
    Override,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Line(l) => write!(f, "line {l}"),
            Source::Override => f.write_str("--set"),
        }
    }
}

/// A value type readable from the config.
pub trait Value: Sized {
    const KIND: &'static str;
    fn parse_value(s: &str) -> Option<Self>;
}

macro_rules! from_str_value {
    ($($t:ty => $kind:expr),* $(,)?) => {
        $(impl Value for $t {
            const KIND: &'static str = $kind;
            fn parse_value(s: &str) -> Option<Self> {
                s.parse().ok()
            }
        })*
    };
}

from_str_value!(
    u32 => "an unsigned integer",
    u64 => "an unsigned integer",
    usize => "an unsigned integer",
    String => "a string",
);

impl Value for f64 {
    const KIND: &'static str = "a finite number";
    fn parse_value(s: &str) -> Option<Self> {
        s.parse::<f64>().ok().filter(|v| v.is_finite())
    }
}

impl Value for bool {
    const KIND: &'static str = "true or false";
    fn parse_value(s: &str) -> Option<Self> {
        match s {
            "true" => Some(true),
            "false" => Some(false),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, (String, Source)>,
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut values: BTreeMap<String, (String, Source)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line,
                    text: raw.trim().to_string(),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(ConfigError::Syntax {
                    line,
                    text: raw.trim().to_string(),
                });
            }
            if let Some((_, Source::Line(first))) = values.get(key) {
                return Err(ConfigError::Duplicate {
                    key: key.to_string(),
                    line,
                    first: *first,
                });
            }
            values.insert(key.to_string(), (value.to_string(), Source::Line(line)));
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), ConfigError> {
        let (key, value) = spec
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .filter(|(k, _)| !k.is_empty())
            .ok_or_else(|| ConfigError::Override(spec.to_string()))?;
        self.set(key, value);
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.values
            .insert(key.to_string(), (value.to_string(), Source::Override));
    }

    pub fn check_keys(&self, allowed: &[&str], command: &'static str) -> Result<(), ConfigError> {
        match self.values.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(key) => Err(ConfigError::UnknownKey {
                key: key.clone(),
                command,
            }),
            None => Ok(()),
        }
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(v, _)| v.as_str())
    }

    fn convert<T: Value>(key: &str, value: &str) -> Result<T, ConfigError> {
        T::parse_value(value).ok_or_else(|| ConfigError::Type {
            key: key.to_string(),
            value: value.to_string(),
            expected: T::KIND,
        })
    }

    pub fn get<T: Value>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        self.raw(key).map(|v| Self::convert(key, v)).transpose()
    }

    pub fn get_or<T: Value>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: Value>(&self, key: &str) -> Result<T, ConfigError> {
        self.get(key)?
            .ok_or_else(|| ConfigError::Missing(key.to_string()))
    }

    pub fn list_or<T: Value>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => {
                let items: Vec<&str> = v.split(',').map(str::trim).collect();
                if items.iter().any(|s| s.is_empty()) {
                    return Err(ConfigError::Type {
                        key: key.to_string(),
                        value: v.to_string(),
                        expected: "a comma-separated list without empty items",
                    });
                }
                items.into_iter().map(|s| Self::convert(key, s)).collect()
            }
        }
    }

    /// Where a key was set, for messages.
    pub fn origin(&self, key: &str) -> Option<String> {
        self.values.get(key).map(|(_, s)| s.to_string())
    }
}
