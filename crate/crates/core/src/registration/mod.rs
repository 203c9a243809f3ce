//! Affine (NMI, Nelder–Mead) and deformable (demons) registration.

mod affine;
mod deformable;

pub use affine::{
    center_of_mass_init, eval_multiterm, register_affine, register_affine_multiterm, AffineFit, AffineRegParams,
    Dof, ParamScales,
};
pub use deformable::{
    register_deformable, register_deformable_multiterm, DeformableFit, DeformableRegParams,
};

use crate::error::{Error, Result};
use crate::image::{Grid, Raster};

/// Target images sharing one grid, each with a non-negative weight.
#[derive(Clone, Debug)]
pub struct WeightedTargets<R> {
    items: Vec<(R, f64)>,
}

impl<R: Raster> WeightedTargets<R> {
    pub fn new(items: Vec<(R, f64)>) -> Result<Self> {
        let Some((first, _)) = items.first() else {
            return Err(Error::InvalidParameter("no targets given".into()));
        };
        let grid = *first.grid();
        for (img, w) in &items {
            if !(w.is_finite() && *w >= 0.0) {
                return Err(Error::InvalidParameter(format!("target weight {w} must be >= 0")));
            }
            if !img.grid().same_shape(&grid) {
                return Err(Error::DimensionMismatch("all targets must share one grid".into()));
            }
        }
        if items.iter().all(|(_, w)| *w == 0.0) {
            return Err(Error::InvalidParameter("all target weights are zero".into()));
        }
        Ok(WeightedTargets { items })
    }

    pub fn single(target: R) -> Self {
        WeightedTargets {
            items: vec![(target, 1.0)],
        }
    }

    pub fn grid(&self) -> &Grid {
        self.items[0].0.grid()
    }

    pub fn items(&self) -> &[(R, f64)] {
        &self.items
    }

    pub fn weights(&self) -> Vec<f64> {
        self.items.iter().map(|(_, w)| *w).collect()
    }

    /// Terms that take part in the objective (weight > 0).
    pub fn active(&self) -> impl Iterator<Item = (&R, f64)> {
        self.items.iter().filter(|(_, w)| *w > 0.0).map(|(r, w)| (r, *w))
    }

    pub(crate) fn total_weight(&self) -> f64 {
        self.items.iter().map(|(_, w)| w).sum()
    }
}
