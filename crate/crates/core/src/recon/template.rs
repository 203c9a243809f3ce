use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image3D, Raster};
use crate::metrics::nmi;
use crate::registration::{center_of_mass_init, register_affine, register_deformable, AffineRegParams, DeformableRegParams};
use crate::transform::{warp_image, Affine, DisplacementField, TransformChain};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TemplateConfig {
    pub affine: AffineRegParams,
    pub deformable: DeformableRegParams,
    pub bins: usize,
}

impl Default for TemplateConfig {
    fn default() -> Self {
        TemplateConfig {
            affine: AffineRegParams::default(),
            deformable: DeformableRegParams {
                levels: 2,
                iterations: 30,
                ..DeformableRegParams::default()
            },
            bins: crate::metrics::DEFAULT_BINS,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TemplateMapping {
    pub affine: Affine,
    /// Zero when the deformable stage did not raise NMI.
    pub field: DisplacementField,
    /// Template space to reconstruction space: field first, then affine.
    pub chain: TransformChain,
    pub nmi_affine: f64,
    pub nmi_deformable: f64,
}

impl TemplateMapping {
    pub fn affine_chain(&self) -> TransformChain {
        TransformChain::single(self.affine)
    }
}

/// Register a reconstructed volume onto a template: 3D affine from a
/// centre-of-mass start, then a deformable refinement.
pub fn map_to_template(volume: &Image3D, template: &Image3D, config: &TemplateConfig) -> Result<TemplateMapping> {
    if volume.grid().ndim != 3 || template.grid().ndim != 3 {
        return Err(Error::DimensionMismatch("template mapping needs 3D volumes".into()));
    }
    let init = center_of_mass_init(volume, template)?;
    let fit = register_affine(volume, template, &config.affine, &init)?;
    let affine = fit.transform;
    let affine_chain = TransformChain::single(affine);
    let warped = warp_image(volume, &affine_chain, template.grid())?;
    let nmi_affine = nmi(&warped, template, config.bins)?;

    let def = register_deformable(volume, template, &config.deformable, &affine_chain)?;
    let chain = def.chain(&affine_chain)?;
    let nmi_def = nmi(&warp_image(volume, &chain, template.grid())?, template, config.bins)?;
    let (field, chain, nmi_deformable) = if nmi_def > nmi_affine {
        (def.field, chain, nmi_def)
    } else {
        log::info!("deformable stage did not raise NMI ({nmi_def:.5} vs {nmi_affine:.5}); keeping affine only");
        let zero = DisplacementField::zeros(*template.grid());
        let chain = crate::transform::compose(&affine_chain, &TransformChain::single(zero.clone()))?;
        (zero, chain, nmi_affine)
    };
    Ok(TemplateMapping {
        affine,
        field,
        chain,
        nmi_affine,
        nmi_deformable,
    })
}
