//! Optional TOML config file. Every key mirrors a flag; flags win.
//!
//! ```toml
//! workers = 8
//! subjects = "subjects.toml"
//!
//! [split]
//! dev = 0.1
//! test = 0.1
//!
//! [train]
//! grid = "grid.json"
//! lexicon = "scored.tsv"
//!
//! [evaluate]
//! format = "table"
//! layout = "two-class"
//!
//! [dedup]
//! max_in_memory = 10000000
//! source_priority = ["wos", "dimensions", "mag"]
//! ```
//!
//! Relative paths are resolved against the working directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use delineate_core::records::Source;

use crate::error::{CliResult, Failure};
use crate::{Format, Layout};

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub workers: Option<usize>,
    pub subjects: Option<PathBuf>,
    pub split: SplitSection,
    pub train: TrainSection,
    pub evaluate: ReportSection,
    pub crosstab: ReportSection,
    pub dedup: DedupSection,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub dev: Option<f64>,
    pub test: Option<f64>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub grid: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    pub format: Option<Format>,
    pub layout: Option<Layout>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DedupSection {
    pub max_in_memory: Option<usize>,
    pub source_priority: Option<Vec<Source>>,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
        Self::parse(&text).map_err(|f| f.at(path))
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| Failure::input("Config", e.to_string()))
    }
}
