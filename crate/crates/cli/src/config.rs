//! Run settings merged from flags, `NOWCAST_*` environment variables and an
//! optional JSON file whose keys are the long flag names.
//!
//! Precedence: flag, then environment, then file, then built-in default.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nowcast_core::{Error, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

impl OneOrMany {
    fn into_vec(self) -> Vec<String> {
        match self {
            OneOrMany::One(s) => vec![s],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FileConfig {
    pub model: Option<OneOrMany>,
    pub reference: Option<String>,
    pub linelist: Option<PathBuf>,
    /// Either `["name=path", ...]` or `{"name": "path"}`.
    pub signal: Option<SignalEntries>,
    pub as_of: Option<String>,
    pub start: Option<String>,
    pub end: Option<String>,
    pub data_end: Option<String>,
    pub window: Option<String>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub max_delay_cap: Option<u32>,
    pub dmax_floor: Option<u32>,
    pub dmax_coverage: Option<f64>,
    pub epidemic_threshold: Option<f64>,
    pub high_threshold: Option<f64>,
    pub out: Option<PathBuf>,
    pub scenario: Option<PathBuf>,
    pub fraction: Option<Vec<f64>>,
    pub share: Option<f64>,
    pub top: Option<usize>,
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SignalEntries {
    Pairs(Vec<String>),
    Map(BTreeMap<String, PathBuf>),
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Input(format!("config {}: {e}", path.display())))
    }

    pub fn models(&self) -> Vec<String> {
        self.model.clone().map(OneOrMany::into_vec).unwrap_or_default()
    }

    pub fn signals(&self) -> Result<Vec<(String, PathBuf)>> {
        match &self.signal {
            None => Ok(Vec::new()),
            Some(SignalEntries::Pairs(p)) => p.iter().map(|s| parse_signal(s)).collect(),
            Some(SignalEntries::Map(m)) => Ok(m.iter().map(|(k, v)| (k.clone(), v.clone())).collect()),
        }
    }
}

/// Parse `name=path`.
pub fn parse_signal(s: &str) -> Result<(String, PathBuf)> {
    match s.split_once('=') {
        Some((name, path)) if !name.trim().is_empty() && !path.trim().is_empty() => {
            Ok((name.trim().to_string(), PathBuf::from(path.trim())))
        }
        _ => Err(Error::Input(format!("--signal expects name=path, got '{s}'"))),
    }
}

/// First present value, or the default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// First present value, or an input error naming the flag.
pub fn require<T>(flag: Option<T>, file: Option<T>, name: &str) -> Result<T> {
    flag.or(file).ok_or_else(|| Error::Input(format!("--{name} is required")))
}
