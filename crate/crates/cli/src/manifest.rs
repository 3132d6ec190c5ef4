//! Run bookkeeping: which queries finished, under which configuration.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use netbench::BenchmarkConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryStatus {
    Pending,
    Generated,
    Completed,
    Failed,
}

impl QueryStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, QueryStatus::Completed | QueryStatus::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: BenchmarkConfig,
    pub tool_version: String,
    pub started_unix: u64,
    #[serde(default)]
    pub finished_unix: Option<u64>,
    pub queries: BTreeMap<String, QueryStatus>,
}

pub fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn new(config: BenchmarkConfig) -> Self {
        Self {
            config,
            tool_version: TOOL_VERSION.into(),
            started_unix: now_unix(),
            finished_unix: None,
            queries: BTreeMap::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Option<Self>, CliError> {
        match std::fs::read_to_string(path) {
            Ok(text) => serde_json::from_str(&text)
                .map(Some)
                .map_err(|e| CliError::Config(format!("{}: corrupt manifest: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(CliError::io(path, e)),
        }
    }

    /// Writes through a temporary file so an interrupted run never leaves a
    /// half-written manifest.
    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let tmp = path.with_extension("json.tmp");
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&tmp, text).map_err(|e| CliError::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
    }
}
