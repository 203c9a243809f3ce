use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::schedule::{Phase, TransformKind};
use crate::error::{io_err, Error, Result};
use crate::image::{gaussian_smooth_3d, Grid, Image2D, Image3D, Raster};
use crate::manifest::SectionStack;
use crate::registration::{
    register_affine_multiterm, register_deformable_multiterm, AffineRegParams, DeformableRegParams, WeightedTargets,
};
use crate::transform::{compose, warp_image, TransformChain};

/// One line of the iteration log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub slice: u32,
    pub kind: TransformKind,
    /// Objective at the start and end of this slice's refinement:
    /// negative weighted NMI for affine steps, weighted mean-squared
    /// difference for deformable ones. Absent when the slice fell back.
    pub objective_before: Option<f64>,
    pub objective_after: Option<f64>,
    /// Error message if registration failed and the previous chain was kept.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fallback: Option<String>,
}

pub fn write_log_jsonl(records: &[IterationRecord], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err(path))?);
    for r in records {
        serde_json::to_writer(&mut f, r)?;
        f.write_all(b"\n").map_err(io_err(path))?;
    }
    f.flush().map_err(io_err(path))
}

pub fn read_log_jsonl(path: &Path) -> Result<Vec<IterationRecord>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Warp every section through its chain onto `out_grid` and stack them at
/// the section thickness.
pub fn render_stack(stack: &SectionStack, chains: &[TransformChain], out_grid: &Grid) -> Result<Image3D> {
    if chains.len() != stack.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} chains for {} sections",
            chains.len(),
            stack.len()
        )));
    }
    let slices = stack
        .sections
        .par_iter()
        .zip(chains)
        .map(|(s, c)| warp_image(s, c, out_grid))
        .collect::<Result<Vec<Image2D>>>()?;
    Image3D::from_slices(&slices, stack.slice_thickness)
}

/// The common reference grid of a stack (all sections must agree).
pub(crate) fn stack_grid(stack: &SectionStack) -> Result<Grid> {
    let first = stack
        .sections
        .first()
        .ok_or_else(|| Error::InvalidImage("empty section stack".into()))?;
    let g = *first.grid();
    if let Some(s) = stack.sections.iter().find(|s| !s.grid().same_shape(&g)) {
        return Err(Error::DimensionMismatch(format!(
            "section {}x{} differs from {}x{}",
            s.width(),
            s.height(),
            g.dims[0],
            g.dims[1]
        )));
    }
    Ok(g)
}

pub(crate) struct Refined {
    pub chain: TransformChain,
    pub record: IterationRecord,
}

/// Targets for position `j`: smoothed slice, unsmoothed slice and the two
/// neighbours. Missing or blank terms are dropped and the rest rescaled.
fn slice_targets(j: usize, stack: &Image3D, smoothed: &Image3D, phase: &Phase) -> Result<WeightedTargets<Image2D>> {
    let n = stack.dims()[2];
    let usable = |img: &Image2D| !img.is_constant();
    let prev = (j > 0).then(|| stack.slice(j - 1)).filter(usable);
    let next = (j + 1 < n).then(|| stack.slice(j + 1)).filter(usable);
    let w = phase.weights.for_slice(prev.is_some(), next.is_some());
    let mut items = Vec::with_capacity(4);
    if w[0] > 0.0 {
        let s = smoothed.slice(j);
        if usable(&s) {
            items.push((s, w[0]));
        }
    }
    if w[1] > 0.0 {
        let s = stack.slice(j);
        if usable(&s) {
            items.push((s, w[1]));
        }
    }
    for (img, wt) in [(prev, w[2]), (next, w[3])] {
        if let Some(img) = img {
            if wt > 0.0 {
                items.push((img, wt));
            }
        }
    }
    WeightedTargets::new(items)
}

/// One multi-term refinement of every slice, composed onto `tk`. A slice
/// whose registration fails keeps `tk` and is flagged in its record.
pub(crate) fn refine_slices(
    moving: &SectionStack,
    stack: &Image3D,
    smoothed: &Image3D,
    tk: &[TransformChain],
    phase: &Phase,
    iteration: usize,
    affine: &AffineRegParams,
    deformable: &DeformableRegParams,
) -> Vec<Refined> {
    (0..moving.len())
        .into_par_iter()
        .map(|j| {
            let slice = moving.indices[j];
            let attempt = || -> Result<(TransformChain, f64, f64)> {
                let targets = slice_targets(j, stack, smoothed, phase)?;
                match phase.kind {
                    TransformKind::Affine => {
                        let fit = register_affine_multiterm(&moving.sections[j], &tk[j], &targets, affine)?;
                        let chain = compose(&tk[j], &TransformChain::single(fit.transform))?;
                        Ok((chain, fit.initial_objective, fit.objective))
                    }
                    TransformKind::Deformable => {
                        let fit = register_deformable_multiterm(&moving.sections[j], &tk[j], &targets, deformable)?;
                        Ok((fit.chain(&tk[j])?, fit.energy_before, fit.energy_after))
                    }
                }
            };
            match attempt() {
                Ok((chain, before, after)) => Refined {
                    chain,
                    record: IterationRecord {
                        iteration,
                        slice,
                        kind: phase.kind,
                        objective_before: Some(before),
                        objective_after: Some(after),
                        fallback: None,
                    },
                },
                Err(e) => {
                    log::warn!("iteration {iteration}, slice {slice}: {e}; keeping previous chain");
                    Refined {
                        chain: tk[j].clone(),
                        record: IterationRecord {
                            iteration,
                            slice,
                            kind: phase.kind,
                            objective_before: None,
                            objective_after: None,
                            fallback: Some(e.to_string()),
                        },
                    }
                }
            }
        })
        .collect()
}

pub(crate) fn smooth_stack(stack: &Image3D, sigma: f64) -> Result<Image3D> {
    gaussian_smooth_3d(stack, sigma)
}
