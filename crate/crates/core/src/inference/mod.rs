//! Laplace-approximation inference for latent Gaussian models.
//!
//! For fixed hyperparameters `theta` the latent mode is found by Newton
//! iterations on the sparse Hessian `Q(theta) + A^T D A`, with linear
//! constraints handled by conditioning by kriging. The hyperparameter
//! posterior is approximated by the Laplace evidence, maximised by BFGS
//! with finite-difference gradients, and explored on a central composite
//! design. Latent marginals are Gaussian mixtures over the design points.

mod criteria;
mod fit;
mod laplace;
mod model;

pub use criteria::{Criteria, WAIC_NEGATIVE_SHARE_LIMIT};
pub use fit::{fit, outer_gradient, Diagnostics, FitOptions, FitResult, GridPoint, HyperSummary};
pub use laplace::{GaussianApprox, Mode, NewtonOptions};
pub use model::{Block, LatentModel, Likelihood};

use crate::error::{Error, Result};
use crate::geometry::Window;
use crate::latent::Support;
use crate::smoothing::{GridField, GridSpec};

/// Projector rows of a mesh-supported block at the centres of masked grid cells.
pub fn block_grid_rows(model: &LatentModel, block: &str, spec: GridSpec, window: &Window) -> Result<Vec<Option<Vec<(usize, f64)>>>> {
    let b = model.block(block).ok_or_else(|| Error::InvalidSpec(format!("model has no term named {block}")))?;
    let Support::Mesh(mesh) = &b.term.support else {
        return Err(Error::InvalidSpec(format!("term {block} is not a spatial field")));
    };
    Ok((0..spec.len())
        .map(|k| {
            let c = spec.center(k);
            if !window.contains(c) {
                return None;
            }
            mesh.project_point(c)
                .map(|row| row.iter().filter(|(_, w)| *w != 0.0).map(|&(i, w)| (b.offset + i, w)).collect())
        })
        .collect())
}

pub(crate) fn field_from_rows<F>(spec: GridSpec, window: &Window, rows: &[Option<Vec<(usize, f64)>>], f: F) -> GridField
where
    F: Fn(&[(usize, f64)]) -> f64 + Sync,
{
    let mut field = GridField::from_fn(spec, window, |_| 0.0);
    let vals: Vec<f64> = {
        use rayon::prelude::*;
        rows.par_iter().map(|r| r.as_ref().map_or(f64::NAN, |r| f(r))).collect()
    };
    for k in 0..spec.len() {
        if field.mask[k] {
            field.values[k] = vals[k];
            if !vals[k].is_finite() {
                field.undefined[k] = true;
            }
        }
    }
    field
}

/// Posterior mean and sd of a spatial term on grid cells.
pub fn posterior_field(fit: &FitResult, model: &LatentModel, block: &str, spec: GridSpec, window: &Window) -> Result<(GridField, GridField)> {
    let rows = block_grid_rows(model, block, spec, window)?;
    let mean = field_from_rows(spec, window, &rows, |r| fit.lincomb(r).0);
    let sd = field_from_rows(spec, window, &rows, |r| fit.lincomb(r).1);
    Ok((mean, sd))
}

/// Posterior probability that a spatial term exceeds zero, per grid cell.
pub fn exceedance(fit: &FitResult, model: &LatentModel, block: &str, spec: GridSpec, window: &Window) -> Result<GridField> {
    let rows = block_grid_rows(model, block, spec, window)?;
    Ok(field_from_rows(spec, window, &rows, |r| fit.exceedance_lincomb(r, 0.0)))
}
