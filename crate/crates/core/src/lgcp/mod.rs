//! Multivariate case-control models.
//!
//! Controls (block 0) and `K` case patterns are each rewritten as Poisson
//! pseudo-observations, then stacked into one latent Gaussian model:
//!
//! | model | controls          | disease `i`                                  |
//! |-------|-------------------|----------------------------------------------|
//! | 0     | `a_0 + S_0(x)`    | `a_i + S_0(x)`                               |
//! | 1     | `a_0 + S_0(x)`    | `a_i + S_0(x) + S_i(x)`                      |
//! | 2     | `a_0 + S_0(x)`    | `a_i + S_0(x) + sum_j F_ij(d_j(x))`          |
//! | 3     | `a_0 + S_0(x)`    | `a_i + S_0(x) + sum_j F_ij(d_j(x)) + S_i(x)` |
//!
//! Confounder coefficients, when requested, enter the case blocks only.

mod assemble;
mod augment;

use serde::{Deserialize, Serialize};

pub use assemble::{assemble, effect_difference, exposure_curve, prepare, AssembledModel, CurvePoint, ExposureSlot, Layout};
pub use augment::{augment, AugmentedData, AugmentedRow, Integration};

use crate::error::{Error, Result};
use crate::geometry::{build_mesh, Mesh, MeshSettings, Point, Window};
use crate::latent::{MaternPriors, Prior, RW1_PRIOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum ModelId {
    M0,
    M1,
    M2,
    M3,
}

impl ModelId {
    pub fn has_specific_fields(self) -> bool {
        matches!(self, ModelId::M1 | ModelId::M3)
    }

    pub fn has_exposure(self) -> bool {
        matches!(self, ModelId::M2 | ModelId::M3)
    }

    pub fn index(self) -> u8 {
        self.into()
    }
}

impl TryFrom<u8> for ModelId {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(ModelId::M0),
            1 => Ok(ModelId::M1),
            2 => Ok(ModelId::M2),
            3 => Ok(ModelId::M3),
            _ => Err(format!("model id must be 0, 1, 2 or 3, got {v}")),
        }
    }
}

impl From<ModelId> for u8 {
    fn from(m: ModelId) -> u8 {
        match m {
            ModelId::M0 => 0,
            ModelId::M1 => 1,
            ModelId::M2 => 2,
            ModelId::M3 => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExposureForm {
    None,
    /// Linear in distance: `beta_ij d`.
    Fixed,
    /// Random walk on distance knots, nearest-knot allocation.
    Rw1,
    /// One-dimensional Matérn process in distance.
    Spde1,
}

impl std::str::FromStr for ExposureForm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(ExposureForm::None),
            "fixed" => Ok(ExposureForm::Fixed),
            "rw1" => Ok(ExposureForm::Rw1),
            "spde1" => Ok(ExposureForm::Spde1),
            _ => Err(format!("unknown exposure form {s}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub name: String,
    pub x: f64,
    pub y: f64,
    pub form: ExposureForm,
}

impl SourceSpec {
    pub fn location(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    /// Per-pattern Voronoi cells, dummy points at the generators.
    #[default]
    Voronoi,
    /// Dual cells of the mesh, dummy points at the mesh vertices.
    DualMesh,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeshConfig {
    /// Longest inner edge (km); defaults to 1/15 of the window diameter.
    pub max_edge: Option<f64>,
    /// Width of the outer buffer (km); defaults to 20% of the window diameter.
    pub extension: Option<f64>,
    /// Outer edges are this many times longer than inner ones; default 2.
    pub outer_factor: Option<f64>,
}

impl MeshConfig {
    pub fn settings(&self, window: &Window) -> MeshSettings {
        let mut s = MeshSettings::new(self.max_edge.unwrap_or(window.diameter() / 15.0));
        s.outer_extension = self.extension;
        if let Some(f) = self.outer_factor {
            s.outer_factor = f;
        }
        s
    }
}

fn default_rw1_knots() -> usize {
    20
}
fn default_spde1_knots() -> usize {
    25
}
fn default_rw1_prior() -> Prior {
    RW1_PRIOR
}
fn default_fixed_precision() -> f64 {
    crate::latent::FixedEffect::DEFAULT_PRECISION
}
fn default_intercept_precision() -> f64 {
    1e-6
}

/// Which of Models 0 to 3 to fit and how its terms are built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model: ModelId,
    pub n_diseases: usize,
    #[serde(default)]
    pub sources: Vec<SourceSpec>,
    #[serde(default)]
    pub confounders: Vec<String>,
    #[serde(default)]
    pub mesh: MeshConfig,
    #[serde(default)]
    pub weights: WeightScheme,
    #[serde(default = "default_rw1_knots")]
    pub rw1_knots: usize,
    #[serde(default = "default_spde1_knots")]
    pub spde1_knots: usize,
    /// Priors of the spatial fields.
    #[serde(default)]
    pub field_priors: MaternPriors,
    /// Priors of one-dimensional Matérn exposure effects.
    #[serde(default)]
    pub exposure_priors: MaternPriors,
    #[serde(default = "default_rw1_prior")]
    pub rw1_prior: Prior,
    /// Prior precision of exposure slopes and confounder coefficients.
    #[serde(default = "default_fixed_precision")]
    pub fixed_precision: f64,
    /// Prior precision of the intercepts.
    #[serde(default = "default_intercept_precision")]
    pub intercept_precision: f64,
}

impl ModelSpec {
    pub fn new(model: ModelId, n_diseases: usize) -> Self {
        ModelSpec {
            model,
            n_diseases,
            sources: Vec::new(),
            confounders: Vec::new(),
            mesh: MeshConfig::default(),
            weights: WeightScheme::default(),
            rw1_knots: default_rw1_knots(),
            spde1_knots: default_spde1_knots(),
            field_priors: MaternPriors::default(),
            exposure_priors: MaternPriors::default(),
            rw1_prior: RW1_PRIOR,
            fixed_precision: default_fixed_precision(),
            intercept_precision: default_intercept_precision(),
        }
    }

    pub fn with_source(mut self, name: &str, at: Point, form: ExposureForm) -> Self {
        self.sources.push(SourceSpec { name: name.to_string(), x: at.x, y: at.y, form });
        self
    }

    /// Sources that contribute an exposure term under this model.
    pub fn active_sources(&self) -> Vec<&SourceSpec> {
        if !self.model.has_exposure() {
            return Vec::new();
        }
        self.sources.iter().filter(|s| s.form != ExposureForm::None).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_diseases == 0 && self.model.has_exposure() {
            return Err(Error::InvalidSpec(format!("model {} needs at least one disease", self.model.index())));
        }
        if self.model.has_exposure() && self.active_sources().is_empty() {
            return Err(Error::InvalidSpec(format!(
                "model {} needs at least one source with an exposure form",
                self.model.index()
            )));
        }
        if self.rw1_knots < 2 || self.spde1_knots < 3 {
            return Err(Error::InvalidSpec("rw1 needs at least 2 knots and spde1 at least 3".into()));
        }
        if !(self.fixed_precision > 0.0 && self.intercept_precision > 0.0) {
            return Err(Error::InvalidSpec("prior precisions must be positive".into()));
        }
        for s in &self.sources {
            if !(s.x.is_finite() && s.y.is_finite()) {
                return Err(Error::InvalidSpec(format!("source {} has non-finite coordinates", s.name)));
            }
        }
        Ok(())
    }

    pub fn build_mesh(&self, window: &Window) -> Result<Mesh> {
        build_mesh(window, &self.mesh.settings(window))
    }
}
