//! `key = value` configuration file.
//!
//! One setting per line; `#` starts a comment; blank lines are ignored.
//! Values may be wrapped in double quotes. List settings take
//! comma-separated values. Unknown keys are rejected so typos surface.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{CliError, Result};

pub const KEYS: &[&str] = &[
    "store",
    "registry_url",
    "hub_url",
    "platform",
    "parallelism",
    "join_key",
    "min_severity",
    "fixed_only",
    "app_selectors",
    "feeds",
    "nvd_feeds",
];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", n + 1))?;
            let key = k.trim().to_ascii_lowercase().replace('-', "_");
            if !KEYS.contains(&key.as_str()) {
                return Err(format!("line {}: unknown key {key:?}", n + 1));
            }
            let mut value = v.trim();
            if let Some(hash) = value.find(" #") {
                value = value[..hash].trim_end();
            }
            if value.len() >= 2 && value.starts_with('"') && value.ends_with('"') {
                value = &value[1..value.len() - 1];
            }
            values.insert(key, value.to_string());
        }
        Ok(ConfigFile { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn list(&self, key: &str) -> Vec<String> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Parsed value of `key`, if set.
    pub fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::usage(format!("config {key}: {e}")))
            })
            .transpose()
    }
}
