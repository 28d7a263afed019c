use std::fs;
use std::path::{Path, PathBuf};

use lgcp::simulate::{STUDY_CASE_COUNTS, STUDY_PHIS, SYNTHETIC_SOURCE};
use lgcp::{FitOptions, ModelId, ModelSpec, Point};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub n_controls: usize,
    pub case_counts: Vec<usize>,
    pub phis: Vec<f64>,
    pub source: Point,
    /// Kernel bandwidth for the re-estimated baseline (km).
    pub bandwidth: f64,
    /// Cells along the longer side of the smoothing grid.
    pub smoothing_res: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            n_controls: 3000,
            case_counts: STUDY_CASE_COUNTS.to_vec(),
            phis: STUDY_PHIS.to_vec(),
            source: SYNTHETIC_SOURCE,
            bandwidth: 0.3,
            smoothing_res: 110,
        }
    }
}

/// Everything a command needs. Command-line flags override these values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<String>,
    pub pattern: Option<PathBuf>,
    pub window: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub grid_res: usize,
    pub verbosity: u8,
    pub model: ModelSpec,
    pub fit: FitOptions,
    pub simulation: SimulationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: None,
            pattern: None,
            window: None,
            out: PathBuf::from("out"),
            seed: 1,
            grid_res: 100,
            verbosity: 0,
            model: ModelSpec::new(ModelId::M0, 1),
            fit: FitOptions::default(),
            simulation: SimulationConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("invalid config {}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn require_file(&self, which: &str, path: &Option<PathBuf>) -> CliResult<PathBuf> {
        let p = path.clone().ok_or_else(|| CliError::Input(format!("no {which} file given")))?;
        if !p.is_file() {
            return Err(CliError::Input(format!("{which} file {} does not exist", p.display())));
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

pub fn hash_file(path: &Path) -> CliResult<FileHash> {
    let bytes = fs::read(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    Ok(FileHash { path: path.display().to_string(), sha256: hex::encode(Sha256::digest(&bytes)) })
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))?;
        }
    }
    fs::write(path, contents).map_err(|e| CliError::write(path, e))
}
