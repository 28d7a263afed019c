use lgcp::inference::{Diagnostics, HyperSummary};
use lgcp::lgcp::CurvePoint;
use lgcp::{Criteria, ModelSpec};
use serde::{Deserialize, Serialize};

use crate::config::FileHash;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRef {
    pub pattern: FileHash,
    pub window: FileHash,
}

/// Coefficient row: posterior mean, sd and 95% interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectRow {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialSummary {
    pub name: String,
    pub range: HyperSummary,
    pub sd: HyperSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveReport {
    pub block: String,
    pub points: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: u8,
    pub n_diseases: usize,
    pub dataset: DatasetRef,
    pub seed: u64,
    pub spec: ModelSpec,
    pub hyperparameters: Vec<HyperSummary>,
    pub spatial_terms: Vec<SpatialSummary>,
    pub fixed_effects: Vec<EffectRow>,
    pub exposure_curves: Vec<CurveReport>,
    pub criteria: Criteria,
    pub diagnostics: Diagnostics,
    pub grids: Vec<String>,
}
