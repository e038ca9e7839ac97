//! Shipped defaults and their lookup.
//!
//! An explicit path always wins. Otherwise a file of the default name in the
//! directory named by `PROVMATCH_CONFIG_DIR` is used when present, and the
//! copy compiled into the crate when not.

use std::fs;
use std::path::{Path, PathBuf};

use crate::cost::{WeightError, WeightVector};
use crate::graph::WhitelistConfig;
use crate::inline::{InlineModel, InlineModelError};

pub const CONFIG_DIR_ENV: &str = "PROVMATCH_CONFIG_DIR";

pub const WEIGHTS_FILE: &str = "weights.json";
pub const WHITELIST_FILE: &str = "whitelist.json";
pub const INLINE_MODEL_FILE: &str = "inline_model.json";

pub const DEFAULT_WEIGHTS_JSON: &str = include_str!("../data/weights.json");
pub const DEFAULT_WHITELIST_JSON: &str = include_str!("../data/whitelist.json");
pub const DEFAULT_INLINE_MODEL_JSON: &str = include_str!("../data/inline_model.json");

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Weights { path: String, source: WeightError },
    #[error("{path}: {source}")]
    Whitelist { path: String, source: serde_json::Error },
    #[error("{path}: {source}")]
    InlineModel { path: String, source: InlineModelError },
}

/// Where a configuration file will be read from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Source {
    File(PathBuf),
    Builtin(&'static str),
}

impl Source {
    pub fn label(&self) -> String {
        match self {
            Source::File(p) => p.display().to_string(),
            Source::Builtin(name) => format!("<builtin {name}>"),
        }
    }
}

pub fn locate(explicit: Option<&Path>, file_name: &'static str) -> Source {
    if let Some(p) = explicit {
        return Source::File(p.to_path_buf());
    }
    if let Some(dir) = std::env::var_os(CONFIG_DIR_ENV) {
        let candidate = Path::new(&dir).join(file_name);
        if candidate.is_file() {
            return Source::File(candidate);
        }
    }
    Source::Builtin(file_name)
}

fn read(source: &Source, builtin: &'static str) -> Result<Vec<u8>, ConfigError> {
    match source {
        Source::File(p) => fs::read(p).map_err(|e| ConfigError::Io {
            path: p.display().to_string(),
            source: e,
        }),
        Source::Builtin(_) => Ok(builtin.as_bytes().to_vec()),
    }
}

pub fn load_weights(explicit: Option<&Path>) -> Result<WeightVector, ConfigError> {
    let source = locate(explicit, WEIGHTS_FILE);
    let bytes = read(&source, DEFAULT_WEIGHTS_JSON)?;
    WeightVector::from_json(&bytes).map_err(|e| ConfigError::Weights {
        path: source.label(),
        source: e,
    })
}

pub fn load_whitelist(explicit: Option<&Path>) -> Result<WhitelistConfig, ConfigError> {
    let source = locate(explicit, WHITELIST_FILE);
    let bytes = read(&source, DEFAULT_WHITELIST_JSON)?;
    serde_json::from_slice(&bytes).map_err(|e| ConfigError::Whitelist {
        path: source.label(),
        source: e,
    })
}

pub fn load_inline_model(explicit: Option<&Path>) -> Result<InlineModel, ConfigError> {
    let source = locate(explicit, INLINE_MODEL_FILE);
    let bytes = read(&source, DEFAULT_INLINE_MODEL_JSON)?;
    InlineModel::from_json(&bytes).map_err(|e| ConfigError::InlineModel {
        path: source.label(),
        source: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_defaults_parse() {
        assert_eq!(WeightVector::from_json(DEFAULT_WEIGHTS_JSON.as_bytes()).unwrap(), WeightVector::default());
        let wl: WhitelistConfig = serde_json::from_str(DEFAULT_WHITELIST_JSON).unwrap();
        assert!(wl.compiler_inserted_functions.contains("__stack_chk_fail"));
        assert_eq!(wl.canonical_names()["puts"], "printf");
        InlineModel::from_json(DEFAULT_INLINE_MODEL_JSON.as_bytes()).unwrap();
    }

    #[test]
    fn explicit_path_wins() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.json");
        let w = WeightVector {
            strings: 5.0,
            ..WeightVector::default()
        };
        fs::write(&path, w.to_json()).unwrap();
        assert_eq!(load_weights(Some(&path)).unwrap(), w);
        assert!(matches!(
            load_weights(Some(&dir.path().join("missing.json"))),
            Err(ConfigError::Io { .. })
        ));
    }
}
