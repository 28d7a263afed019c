use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sprs::TriMat;

use super::augment::{augment, AugmentedData, Integration};
use super::{ExposureForm, ModelSpec, WeightScheme};
use crate::error::{Error, Result};
use crate::geometry::{Mesh, PointPattern, Window};
use crate::inference::{block_grid_rows, field_from_rows, FitResult, LatentModel, Likelihood};
use crate::latent::{equispaced_knots, fixed_term, rw1_term, spde1d_term, spde2d_term, GmrfTerm};
use crate::smoothing::{GridField, GridSpec};

/// Exposure term of one disease and one source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureSlot {
    pub disease: usize,
    pub source: usize,
    pub source_name: String,
    pub form: ExposureForm,
    pub block: String,
}

/// Names of the latent blocks making up the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub intercepts: String,
    pub baseline: String,
    /// `specific[i - 1]` is the residual field of disease `i`.
    pub specific: Vec<String>,
    pub exposures: Vec<ExposureSlot>,
    /// Confounder block of each disease, if any.
    pub confounders: Vec<String>,
}

pub const INTERCEPTS: &str = "intercept";
pub const BASELINE: &str = "S0";

pub fn specific_name(i: usize) -> String {
    format!("S{i}")
}

#[derive(Debug, Clone)]
pub struct AssembledModel {
    pub spec: ModelSpec,
    pub data: AugmentedData,
    pub mesh: Arc<Mesh>,
    pub model: LatentModel,
    pub layout: Layout,
}

/// Builds the latent blocks and the joint projector for `spec`.
pub fn assemble(spec: &ModelSpec, data: AugmentedData, mesh: Arc<Mesh>) -> Result<AssembledModel> {
    spec.validate()?;
    let k = spec.n_diseases;
    if data.n_blocks != k + 1 {
        return Err(Error::InvalidSpec(format!(
            "spec has {k} diseases but the data have {} case types",
            data.n_blocks.saturating_sub(1)
        )));
    }
    let sources = spec.active_sources();
    let conf_idx: Vec<usize> = spec
        .confounders
        .iter()
        .map(|c| {
            data.covariate_names.iter().position(|n| n == c).ok_or_else(|| {
                Error::InvalidInput(format!("confounder {c} is not available at the data or dummy points"))
            })
        })
        .collect::<Result<_>>()?;
    let source_index: Vec<usize> = sources.iter().map(|s| spec.sources.iter().position(|t| t.name == s.name).unwrap()).collect();
    if data.rows.iter().any(|r| r.distances.len() != spec.sources.len()) && !sources.is_empty() {
        return Err(Error::InvalidSpec("augmented rows carry distances for a different source list".into()));
    }

    let mut terms: Vec<GmrfTerm> = Vec::new();
    terms.push(fixed_term(INTERCEPTS, vec![spec.intercept_precision; k + 1]));
    terms.push(spde2d_term(BASELINE, Arc::clone(&mesh), &spec.field_priors)?);
    let mut specific = Vec::new();
    if spec.model.has_specific_fields() {
        for i in 1..=k {
            terms.push(spde2d_term(&specific_name(i), Arc::clone(&mesh), &spec.field_priors)?);
            specific.push(specific_name(i));
        }
    }
    let mut exposures = Vec::new();
    for i in 1..=k {
        for (s, &j) in sources.iter().zip(&source_index) {
            let name = format!("F{i}.{}", s.name);
            let max_d = data.max_distance(j).max(1e-6);
            let term = match s.form {
                ExposureForm::Fixed => fixed_term(&name, vec![spec.fixed_precision]),
                ExposureForm::Rw1 => rw1_term(&name, equispaced_knots(spec.rw1_knots, max_d), spec.rw1_prior)?,
                ExposureForm::Spde1 => {
                    // the level of the curve is carried by the disease intercept
                    let mut t = spde1d_term(&name, equispaced_knots(spec.spde1_knots, max_d), &spec.exposure_priors)?;
                    t.constraints = vec![vec![1.0; t.dim()]];
                    t
                }
                ExposureForm::None => unreachable!("inactive sources are filtered"),
            };
            terms.push(term);
            exposures.push(ExposureSlot { disease: i, source: j, source_name: s.name.clone(), form: s.form, block: name });
        }
    }
    let mut confounders = Vec::new();
    if !conf_idx.is_empty() {
        for i in 1..=k {
            let name = format!("beta{i}");
            terms.push(fixed_term(&name, vec![spec.fixed_precision; conf_idx.len()]));
            confounders.push(name);
        }
    }

    let mut offsets = Vec::with_capacity(terms.len());
    let mut n = 0;
    for t in &terms {
        offsets.push(n);
        n += t.dim();
    }
    let offset_of = |name: &str| offsets[terms.iter().position(|t| t.name == name).unwrap()];
    let term_of = |name: &str| &terms[terms.iter().position(|t| t.name == name).unwrap()];

    let mut trip = TriMat::new((data.len(), n));
    let (o_int, o_base) = (offset_of(INTERCEPTS), offset_of(BASELINE));
    for (r, row) in data.rows.iter().enumerate() {
        let b = row.block;
        trip.add_triplet(r, o_int + b, 1.0);
        let bary = mesh.project_point(row.location).ok_or(Error::PointOutsideMesh {
            index: r,
            x: row.location.x,
            y: row.location.y,
        })?;
        let spatial: Vec<(usize, f64)> = bary.iter().filter(|(_, w)| *w != 0.0).copied().collect();
        for &(v, w) in &spatial {
            trip.add_triplet(r, o_base + v, w);
        }
        if b == 0 {
            continue;
        }
        if spec.model.has_specific_fields() {
            let o = offset_of(&specific_name(b));
            for &(v, w) in &spatial {
                trip.add_triplet(r, o + v, w);
            }
        }
        for slot in exposures.iter().filter(|e| e.disease == b) {
            let o = offset_of(&slot.block);
            let d = row.distances[slot.source];
            match slot.form {
                ExposureForm::Fixed => trip.add_triplet(r, o, d),
                _ => {
                    for (v, w) in term_of(&slot.block).project_scalar(d)? {
                        trip.add_triplet(r, o + v, w);
                    }
                }
            }
        }
        if !conf_idx.is_empty() {
            let o = offset_of(&format!("beta{b}"));
            for (c, &ci) in conf_idx.iter().enumerate() {
                trip.add_triplet(r, o + c, row.covariates[ci]);
            }
        }
    }

    let mut x0 = vec![0.0; n];
    for b in 0..=k {
        let count = data.observed(b) as f64;
        x0[o_int + b] = (count / data.window_area).ln();
    }
    let y: Vec<f64> = data.rows.iter().map(|r| r.y).collect();
    let w: Vec<f64> = data.rows.iter().map(|r| r.weight).collect();
    let model = LatentModel::new(terms, y, w, trip.to_csr(), Likelihood::Poisson)?.with_start(x0)?;
    let layout = Layout {
        intercepts: INTERCEPTS.to_string(),
        baseline: BASELINE.to_string(),
        specific,
        exposures,
        confounders,
    };
    Ok(AssembledModel { spec: spec.clone(), data, mesh, model, layout })
}

/// Mesh, augmentation and assembly in one step.
pub fn prepare(spec: &ModelSpec, pattern: &PointPattern, window: &Window) -> Result<AssembledModel> {
    spec.validate()?;
    let mesh = Arc::new(spec.build_mesh(window)?);
    let sources: Vec<_> = spec.sources.iter().map(|s| s.location()).collect();
    let integration = match spec.weights {
        WeightScheme::Voronoi => Integration::Voronoi,
        WeightScheme::DualMesh => Integration::DualMesh(&mesh),
    };
    let data = augment(pattern, window, integration, &sources)?;
    assemble(spec, data, mesh)
}

/// Posterior summary of an exposure effect at one distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub distance: f64,
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Posterior mean and 95% band of `F_ij(d)` at the given distances.
pub fn exposure_curve(fit: &FitResult, am: &AssembledModel, disease: usize, source: &str, distances: &[f64]) -> Result<Vec<CurvePoint>> {
    let slot = am
        .layout
        .exposures
        .iter()
        .find(|e| e.disease == disease && e.source_name == source)
        .ok_or_else(|| Error::InvalidSpec(format!("no exposure term for disease {disease} and source {source}")))?;
    let block = am.model.block(&slot.block).expect("layout block exists");
    distances
        .iter()
        .map(|&d| {
            let b: Vec<(usize, f64)> = match slot.form {
                ExposureForm::Fixed => vec![(block.offset, d)],
                _ => block.term.project_scalar(d)?.into_iter().map(|(i, w)| (block.offset + i, w)).collect(),
            };
            let (mean, sd) = fit.lincomb(&b);
            let z = 1.959_963_984_540_054;
            Ok(CurvePoint { distance: d, mean, sd, lower: mean - z * sd, upper: mean + z * sd })
        })
        .collect()
}

/// Posterior mean and sd of `S_u(x) - S_v(x)` on grid cells, using the
/// joint Gaussian approximation at the hyperparameter mode.
pub fn effect_difference(
    fit: &FitResult,
    am: &AssembledModel,
    u: usize,
    v: usize,
    spec: GridSpec,
    window: &Window,
) -> Result<(GridField, GridField)> {
    if !am.spec.model.has_specific_fields() {
        return Err(Error::InvalidSpec(format!("model {} has no disease-specific fields", am.spec.model.index())));
    }
    let k = am.spec.n_diseases;
    if u == 0 || v == 0 || u > k || v > k {
        return Err(Error::InvalidInput(format!("diseases must lie in 1..={k}, got {u} and {v}")));
    }
    let ru = block_grid_rows(&am.model, &specific_name(u), spec, window)?;
    let rv = block_grid_rows(&am.model, &specific_name(v), spec, window)?;
    let ap = &fit.approximations[fit.modal_index()];
    let rows: Vec<Option<Vec<(usize, f64)>>> = ru
        .into_iter()
        .zip(rv)
        .map(|(a, b)| {
            let (mut a, b) = (a?, b?);
            if u != v {
                a.extend(b.iter().map(|&(i, w)| (i, -w)));
            } else {
                a.clear();
            }
            Some(a)
        })
        .collect();
    let mean = field_from_rows(spec, window, &rows, |r| ap.lincomb_mean(r));
    let sd = field_from_rows(spec, window, &rows, |r| ap.lincomb_var(r).max(0.0).sqrt());
    Ok((mean, sd))
}
