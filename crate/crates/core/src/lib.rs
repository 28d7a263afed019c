//! Bayesian multivariate log-Gaussian Cox process models for case-control
//! point patterns.
//!
//! Controls and `K` disease case patterns share a baseline spatial field
//! `S_0`; each disease may carry its own residual field `S_i` and
//! distance-based exposure effects. Fields are Matérn GMRFs built with the
//! SPDE finite-element construction, and inference uses Laplace
//! approximations for the latent field and the hyperparameter posterior.
//!
//! Module map:
//! - [`geometry`]: windows, patterns, meshing, FEM matrices, projectors, Voronoi weights
//! - [`smoothing`]: kernel intensity estimates and risk-ratio surfaces
//! - [`latent`]: latent Gaussian terms and their priors
//! - [`lgcp`]: augmentation and assembly of Models 0 to 3
//! - [`inference`]: Laplace engine, hyperparameter fitting, criteria, exceedance maps
//! - [`simulate`]: thinning sampler and the exposure simulation study
//! - [`sparse`]: sparse Cholesky with selected inversion

pub mod error;
pub mod geometry;
pub mod inference;
pub mod latent;
pub mod lgcp;
pub mod simulate;
pub mod smoothing;
pub mod sparse;

pub use error::{Error, Result};
pub use geometry::{Mesh, Point, PointPattern, Window};

pub use inference::{fit, Criteria, FitOptions, FitResult, LatentModel};
pub use latent::{GmrfTerm, Hyperparameter, MaternPriors, Prior};
pub use lgcp::{prepare, AssembledModel, AugmentedData, ExposureForm, ModelId, ModelSpec, SourceSpec, WeightScheme};
pub use simulate::{simulate_study, Scenario};
pub use smoothing::{GridField, GridSpec};
