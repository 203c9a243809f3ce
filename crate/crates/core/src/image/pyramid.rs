//! Gaussian pyramids for coarse-to-fine registration.

use super::filter::smooth_buffer;
use super::{Grid, Raster};
use crate::error::{Error, Result};

const MIN_COARSE: usize = 8;

/// Largest level count whose coarsest level keeps at least 8 samples per axis.
pub fn max_pyramid_levels(grid: &Grid) -> usize {
    let mut g = *grid;
    let mut levels = 0;
    while (0..g.ndim).all(|a| g.dims[a] >= MIN_COARSE) {
        levels += 1;
        g = g.decimated();
    }
    levels
}

/// Decimate every axis by two after Gaussian smoothing with sigma 1.
pub(crate) fn downsample_buffer(data: &[f64], grid: &Grid) -> (Vec<f64>, Grid) {
    let smoothed = smooth_buffer(data, grid, 1.0);
    let coarse = grid.decimated();
    let step = |a: usize| if a < grid.ndim { 2 } else { 1 };
    let mut out = Vec::with_capacity(coarse.len());
    for z in 0..coarse.dims[2] {
        for y in 0..coarse.dims[1] {
            for x in 0..coarse.dims[0] {
                out.push(smoothed[grid.offset(x * step(0), y * step(1), z * step(2))]);
            }
        }
    }
    (out, coarse)
}

/// `levels` images, level 0 being the input and each further level smoothed
/// (sigma 1) then decimated by two.
pub fn pyramid<R: Raster>(img: &R, levels: usize) -> Result<Vec<R>> {
    if levels == 0 {
        return Err(Error::InvalidParameter("pyramid needs at least one level".into()));
    }
    let max = max_pyramid_levels(img.grid());
    if levels > max {
        return Err(Error::InvalidParameter(format!(
            "{levels} pyramid levels requested but grid {:?} supports {max}",
            &img.grid().dims[..img.grid().ndim]
        )));
    }
    let mut out = vec![img.clone()];
    for _ in 1..levels {
        let prev = out.last().expect("non-empty");
        let (data, grid) = downsample_buffer(prev.values(), prev.grid());
        out.push(R::from_parts_clamped(grid, data));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Image2D;

    #[test]
    fn single_level_is_input() {
        let img = Image2D::from_fn(16, 16, [1.0, 1.0], |x, y| ((x + y) % 5) as f64 / 5.0).unwrap();
        let p = pyramid(&img, 1).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0], img);
    }

    #[test]
    fn sizes_halve() {
        let img = Image2D::from_fn(64, 64, [1.0, 1.0], |x, _| x as f64 / 63.0).unwrap();
        let p = pyramid(&img, 3).unwrap();
        let sizes: Vec<_> = p.iter().map(|i| i.width()).collect();
        assert_eq!(sizes, vec![64, 32, 16]);
        assert_eq!(p[2].spacing(), [4.0, 4.0]);
    }

    #[test]
    fn constant_stays_constant() {
        let img = Image2D::filled(32, 32, [1.0, 1.0], 0.3).unwrap();
        for level in pyramid(&img, 3).unwrap() {
            assert!(level.pixels().iter().all(|v| (v - 0.3).abs() < 1e-12));
        }
    }

    #[test]
    fn too_many_levels_is_an_error() {
        let img = Image2D::filled(32, 32, [1.0, 1.0], 0.3).unwrap();
        assert_eq!(max_pyramid_levels(img.grid()), 3);
        assert!(pyramid(&img, 4).is_err());
    }
}
