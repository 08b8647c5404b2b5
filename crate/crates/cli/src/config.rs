//! Optional JSON config file. Command-line flags win over file values, which
//! win over built-in defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub format: Option<String>,
    pub output: Option<PathBuf>,
    pub precision: Option<usize>,
    pub n: Option<usize>,
    pub n_min: Option<usize>,
    pub n_max: Option<usize>,
    pub k: Option<usize>,
    pub protocol: Option<String>,
    pub ineq: Option<String>,
    pub players: Option<usize>,
    pub runs: Option<u64>,
    pub seed: Option<u64>,
    pub ordering: Option<String>,
    pub compare: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }
}

/// `flag`, else `file`, else `default`.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Like [`pick`] for values that arrive as strings and need parsing.
pub fn pick_parsed<T: std::str::FromStr>(
    flag: Option<T>,
    file: Option<&str>,
    default: T,
    what: &str,
) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    if let Some(v) = flag {
        return Ok(v);
    }
    match file {
        Some(s) => s.parse().map_err(|e| CliError::Usage(format!("config {what}: {e}"))),
        None => Ok(default),
    }
}
