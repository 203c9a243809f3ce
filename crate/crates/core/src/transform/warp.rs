use rayon::prelude::*;

use super::chain::TransformChain;
use crate::error::{Error, Result};
use crate::image::{sample_zero, Grid, Raster, SegmentationMask};

/// Backward-warp raw values: output point `x` receives `src(chain(x))`.
/// Also reports which output samples landed inside the source grid.
pub(crate) fn warp_values(
    src: &[f64],
    src_grid: &Grid,
    chain: &TransformChain,
    out_grid: &Grid,
) -> (Vec<f64>, Vec<bool>) {
    let plane = out_grid.dims[0] * out_grid.dims[1];
    let warp_plane = |z: usize| -> Vec<(f64, bool)> {
        let mut out = Vec::with_capacity(plane);
        for y in 0..out_grid.dims[1] {
            for x in 0..out_grid.dims[0] {
                let q = chain.apply(out_grid.point(x, y, z));
                let idx = src_grid.to_index(q);
                out.push((sample_zero(src, src_grid, idx), src_grid.contains_index(idx)));
            }
        }
        out
    };
    // per-sample work is independent, so the split does not affect results
    let pairs: Vec<(f64, bool)> = if out_grid.dims[2] > 1 {
        (0..out_grid.dims[2]).into_par_iter().flat_map_iter(warp_plane).collect()
    } else {
        warp_plane(0)
    };
    pairs.into_iter().unzip()
}

/// Resample `img` onto `out_grid` through `chain` (bi/trilinear, 0 outside).
pub fn warp_image<R: Raster>(img: &R, chain: &TransformChain, out_grid: &Grid) -> Result<R> {
    let g = img.grid();
    if chain.dim() != g.ndim || out_grid.ndim != g.ndim {
        return Err(Error::DimensionMismatch(format!(
            "{}D chain cannot warp a {}D image onto a {}D grid",
            chain.dim(),
            g.ndim,
            out_grid.ndim
        )));
    }
    let (values, _) = warp_values(img.values(), g, chain, out_grid);
    Ok(R::from_parts_clamped(*out_grid, values))
}

/// Resample a mask by warping its 0/1 indicator and keeping samples at or
/// above one half.
pub fn warp_mask(mask: &SegmentationMask, chain: &TransformChain, out_grid: &Grid) -> Result<SegmentationMask> {
    let g = mask.grid();
    if chain.dim() != g.ndim || out_grid.ndim != g.ndim {
        return Err(Error::DimensionMismatch(format!(
            "{}D chain cannot warp a {}D mask",
            chain.dim(),
            g.ndim
        )));
    }
    let (values, _) = warp_values(&mask.to_values(), g, chain, out_grid);
    SegmentationMask::new(*out_grid, values.iter().map(|v| *v >= 0.5).collect())
}
