use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::backlit::{run_schedule, ReconConfig, ReconstructionState};
use super::schedule::{IterationSchedule, TransformKind};
use super::stack::{stack_grid, IterationRecord};
use crate::error::{Error, Result};
use crate::image::SegmentationMask;
use crate::manifest::SectionStack;
use crate::registration::{center_of_mass_init, register_affine, AffineRegParams, DeformableRegParams};
use crate::transform::{compose, warp_mask, TransformChain};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IshConfig {
    /// Deformable refinements against neighbouring stained sections.
    pub deformable_iterations: usize,
    pub affine: AffineRegParams,
    pub deformable: DeformableRegParams,
}

impl Default for IshConfig {
    fn default() -> Self {
        IshConfig {
            deformable_iterations: 2,
            affine: AffineRegParams::default(),
            deformable: DeformableRegParams::default(),
        }
    }
}

/// Register stained sections into an existing back-lit reconstruction.
///
/// Each section is first aligned affinely to its raw back-lit counterpart
/// and composed with that slice's reconstruction chain; the result is then
/// refined deformably against neighbouring stained sections.
pub fn reconstruct_ish(
    ish: &SectionStack,
    backlit: &SectionStack,
    recon: &ReconstructionState,
    config: &IshConfig,
) -> Result<ReconstructionState> {
    let missing: Vec<u32> = ish
        .indices
        .iter()
        .copied()
        .filter(|i| backlit.position(*i).is_none() || !recon.indices.contains(i))
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingCounterpart(missing));
    }
    stack_grid(ish)?;
    let schedule = IterationSchedule::ish(config.deformable_iterations);
    let recon_config = ReconConfig {
        schedule,
        smoothing_sigma: 0.0,
        affine: config.affine,
        deformable: config.deformable,
    };
    recon_config.validate()?;

    let stage1: Vec<(TransformChain, IterationRecord)> = (0..ish.len())
        .into_par_iter()
        .map(|j| -> Result<(TransformChain, IterationRecord)> {
            let slice = ish.indices[j];
            let raw = &backlit.sections[backlit.position(slice).expect("checked above")];
            let bl_chain = &recon.chains[recon.indices.iter().position(|i| *i == slice).expect("checked above")];
            let section = &ish.sections[j];
            let fit = center_of_mass_init(section, raw).and_then(|init| register_affine(section, raw, &config.affine, &init));
            let (a, record) = match fit {
                Ok(fit) => (
                    TransformChain::single(fit.transform),
                    IterationRecord {
                        iteration: 0,
                        slice,
                        kind: TransformKind::Affine,
                        objective_before: Some(fit.initial_objective),
                        objective_after: Some(fit.objective),
                        fallback: None,
                    },
                ),
                Err(e) => {
                    log::warn!("stained slice {slice}: affine to back-lit failed ({e}); using identity");
                    (
                        TransformChain::identity(2),
                        IterationRecord {
                            iteration: 0,
                            slice,
                            kind: TransformKind::Affine,
                            objective_before: None,
                            objective_after: None,
                            fallback: Some(e.to_string()),
                        },
                    )
                }
            };
            Ok((compose(&a, bl_chain)?, record))
        })
        .collect::<Result<_>>()?;
    let (chains, log): (Vec<_>, Vec<_>) = stage1.into_iter().unzip();
    run_schedule(ish, recon.grid, &recon_config, (chains, log))
}

/// Bring per-section masks into the reconstruction grid through `chains`.
pub fn map_masks(masks: &[SegmentationMask], state: &ReconstructionState) -> Result<Vec<SegmentationMask>> {
    if masks.len() != state.chains.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} masks for {} chains",
            masks.len(),
            state.chains.len()
        )));
    }
    masks
        .par_iter()
        .zip(&state.chains)
        .map(|(m, c)| warp_mask(m, c, &state.grid))
        .collect()
}
