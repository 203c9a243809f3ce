use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::schedule::{IterationSchedule, TkPolicy, TransformKind};
use super::stack::{refine_slices, render_stack, smooth_stack, stack_grid, IterationRecord};
use crate::error::{Error, Result};
use crate::image::{Grid, Image3D};
use crate::manifest::SectionStack;
use crate::registration::{center_of_mass_init, register_affine, AffineRegParams, DeformableRegParams};
use crate::transform::TransformChain;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconConfig {
    pub schedule: IterationSchedule,
    /// Isotropic 3D smoothing of the stack, in voxels.
    pub smoothing_sigma: f64,
    pub affine: AffineRegParams,
    pub deformable: DeformableRegParams,
}

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig {
            schedule: IterationSchedule::default(),
            smoothing_sigma: 3.0,
            affine: AffineRegParams::default(),
            deformable: DeformableRegParams::default(),
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if !(self.smoothing_sigma.is_finite() && self.smoothing_sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!("smoothing sigma {}", self.smoothing_sigma)));
        }
        self.affine.validate()?;
        self.deformable.validate()
    }
}

/// Result of stack reconstruction.
#[derive(Clone, Debug)]
pub struct ReconstructionState {
    pub indices: Vec<u32>,
    /// Final chain per slice (reference grid to section space).
    pub chains: Vec<TransformChain>,
    /// `history[i][j]`: chain of slice `j` after iteration `i`.
    pub history: Vec<Vec<TransformChain>>,
    /// The sections rendered through `chains`.
    pub volume: Image3D,
    pub grid: Grid,
    pub log: Vec<IterationRecord>,
}

impl ReconstructionState {
    /// Slices whose registration failed at some iteration.
    pub fn fallbacks(&self) -> Vec<&IterationRecord> {
        self.log.iter().filter(|r| r.fallback.is_some()).collect()
    }

    pub fn iterations(&self) -> usize {
        self.history.len()
    }
}

/// Drive a stack through `schedule`. Iteration 0 is supplied by `initial`;
/// later iterations refine against the stack rendered so far.
pub(crate) fn run_schedule(
    moving: &SectionStack,
    grid: Grid,
    config: &ReconConfig,
    initial: (Vec<TransformChain>, Vec<IterationRecord>),
) -> Result<ReconstructionState> {
    let (chains0, mut log) = initial;
    let mut history = vec![chains0];
    let mut volume = render_stack(moving, &history[0], &grid)?;
    for iteration in 1..=config.schedule.last_iteration() {
        let phase = config
            .schedule
            .phase_for(iteration)
            .ok_or_else(|| Error::InvalidParameter(format!("no phase covers iteration {iteration}")))?;
        let tk = match phase.tk {
            TkPolicy::Previous => &history[iteration - 1],
            TkPolicy::Frozen(k) => &history[k],
        };
        let smoothed = if phase.weights.a > 0.0 {
            smooth_stack(&volume, config.smoothing_sigma)?
        } else {
            volume.clone()
        };
        let refined = refine_slices(
            moving,
            &volume,
            &smoothed,
            tk,
            phase,
            iteration,
            &config.affine,
            &config.deformable,
        );
        let mut chains = Vec::with_capacity(refined.len());
        for r in refined {
            chains.push(r.chain);
            log.push(r.record);
        }
        volume = render_stack(moving, &chains, &grid)?;
        log::info!("iteration {iteration} ({}) done", phase.kind);
        history.push(chains);
    }
    Ok(ReconstructionState {
        indices: moving.indices.clone(),
        chains: history.last().expect("iteration 0 present").clone(),
        history,
        volume,
        grid,
        log,
    })
}

/// Reconstruct a 3D volume from back-lit sections using the block-face
/// sections (same indices) as the undistorted reference.
pub fn reconstruct_backlit(
    backlit: &SectionStack,
    blockface: &SectionStack,
    config: &ReconConfig,
) -> Result<ReconstructionState> {
    config.validate()?;
    let missing: Vec<u32> = backlit
        .indices
        .iter()
        .copied()
        .filter(|i| blockface.position(*i).is_none())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingCounterpart(missing));
    }
    let grid = stack_grid(blockface)?;
    stack_grid(backlit)?;

    let initial: Vec<(TransformChain, IterationRecord)> = (0..backlit.len())
        .into_par_iter()
        .map(|j| {
            let slice = backlit.indices[j];
            let bf = &blockface.sections[blockface.position(slice).expect("checked above")];
            let bl = &backlit.sections[j];
            let fit = center_of_mass_init(bl, bf).and_then(|init| register_affine(bl, bf, &config.affine, &init));
            match fit {
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
                    log::warn!("slice {slice}: initial alignment failed ({e}); using identity");
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
            }
        })
        .collect();
    let (chains, log): (Vec<_>, Vec<_>) = initial.into_iter().unzip();
    run_schedule(backlit, grid, config, (chains, log))
}
