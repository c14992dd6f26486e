//! Config file loading and flag/file/default resolution.
//!
//! Every command reads the same optional JSON file. Values resolve in
//! order: command-line flag, then config file, then built-in default.
//! The fully resolved configuration is embedded into every output
//! report for provenance. Worker count (`--jobs`) is deliberately not
//! part of the echo: results are independent of it by construction.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use drivescope_core::eval::grid::ClassifierGrid;
use drivescope_core::{Error, Result};

pub const DEFAULT_SEED: u64 = 7;

pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

pub fn pick_opt<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}

/// The parsed config file. Unknown keys are rejected so typos fail
/// loudly instead of silently falling back to defaults.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub synth: Option<SynthSection>,
    pub ingest: Option<IngestSection>,
    pub detect: Option<DetectSection>,
    pub classify: Option<ClassifySection>,
    pub degrade: Option<DegradeSection>,
    pub autoregress: Option<AutoregressSection>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&raw)
            .map_err(|e| Error::Config(format!("bad config file {}: {e}", path.display())))
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub per_class: Option<usize>,
    pub timestamps: Option<usize>,
    pub dt: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    pub input: Option<PathBuf>,
    /// canonical column name -> archive column name
    pub column_map: Option<BTreeMap<String, String>>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectSection {
    pub candidates: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub min_confidence: Option<f64>,
    pub class: Option<String>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifySection {
    pub data: Option<PathBuf>,
    pub kinds: Option<Vec<String>>,
    pub windows: Option<Vec<usize>>,
    pub stride: Option<usize>,
    pub repeats: Option<usize>,
    pub cv_folds: Option<usize>,
    pub family: Option<String>,
    pub grid: Option<ClassifierGrid>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DegradeSection {
    pub data: Option<PathBuf>,
    pub window: Option<usize>,
    pub stride: Option<usize>,
    pub repeats: Option<usize>,
    pub cv_folds: Option<usize>,
    pub family: Option<String>,
    pub grid: Option<ClassifierGrid>,
    pub rates: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoregressSection {
    pub data: Option<PathBuf>,
    pub window: Option<usize>,
    pub stride: Option<usize>,
    pub repeats: Option<usize>,
    pub history: Option<Vec<usize>>,
    pub future: Option<Vec<usize>>,
    pub hidden_dims: Option<[usize; 2]>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
}

/// Wrapper written around every report file.
#[derive(Serialize)]
pub struct ReportEnvelope<C: Serialize, R: Serialize> {
    pub tool_version: &'static str,
    pub command: &'static str,
    pub config: C,
    pub report: R,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut body = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Data(format!("report serialization failed: {e}")))?;
    body.push('\n');
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}
