use serde::{Deserialize, Serialize};

use super::WeightedTargets;
use crate::error::{Error, Result};
use crate::image::filter::smooth_vectors;
use crate::image::pyramid::downsample_buffer;
use crate::image::{max_pyramid_levels, sample_clamped, sample_zero, Grid, Raster};
use crate::transform::Vec3;
use crate::transform::{jacobian_min_det_raw, warp_values, DisplacementField, TransformChain};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeformableRegParams {
    pub levels: usize,
    pub iterations: usize,
    /// Smoothing of each update, voxels.
    pub sigma_fluid: f64,
    /// Smoothing of the accumulated field, voxels.
    pub sigma_diffusion: f64,
    /// Largest update per iteration, voxels.
    pub max_step: f64,
    /// Stop a level once the mean update falls below this many voxels.
    pub tolerance: f64,
    /// Step halvings tried before giving up on an update.
    pub max_halvings: usize,
    /// Rescale each target to the moving image's total intensity.
    pub intensity_matching: bool,
}

impl Default for DeformableRegParams {
    fn default() -> Self {
        DeformableRegParams {
            levels: 3,
            iterations: 50,
            sigma_fluid: 2.0,
            sigma_diffusion: 1.0,
            max_step: 0.5,
            tolerance: 0.01,
            max_halvings: 5,
            intensity_matching: true,
        }
    }
}

impl DeformableRegParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.levels >= 1
            && self.sigma_fluid.is_finite()
            && self.sigma_fluid >= 0.0
            && self.sigma_diffusion.is_finite()
            && self.sigma_diffusion >= 0.0
            && self.max_step > 0.0
            && self.tolerance > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid deformable parameters {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeformableFit {
    /// Physical displacement on the target grid, applied before the
    /// initial chain.
    pub field: DisplacementField,
    /// Mean-squared difference to the weighted target blend, before and after.
    pub energy_before: f64,
    pub energy_after: f64,
    /// Accepted updates summed over levels.
    pub iterations: usize,
}

impl DeformableFit {
    /// `init` preceded by the fitted field.
    pub fn chain(&self, init: &TransformChain) -> Result<TransformChain> {
        crate::transform::compose(init, &TransformChain::single(self.field.clone()))
    }
}

/// Demons registration of `moving` (seen through `init`) onto `fixed`.
pub fn register_deformable<R: Raster>(
    moving: &R,
    fixed: &R,
    params: &DeformableRegParams,
    init: &TransformChain,
) -> Result<DeformableFit> {
    register_deformable_multiterm(moving, init, &WeightedTargets::single(fixed.clone()), params)
}

/// Demons registration against several weighted targets: per-target forces
/// are combined by weighted average before smoothing.
pub fn register_deformable_multiterm<R: Raster>(
    moving: &R,
    tk: &TransformChain,
    targets: &WeightedTargets<R>,
    params: &DeformableRegParams,
) -> Result<DeformableFit> {
    params.validate()?;
    let grid = *targets.grid();
    if moving.grid().ndim != grid.ndim || tk.dim() != grid.ndim {
        return Err(Error::DimensionMismatch("moving, chain and targets must share a dimension".into()));
    }
    if moving.is_constant() {
        return Err(Error::DegenerateEntropy);
    }
    let (prewarped, _) = warp_values(moving.values(), moving.grid(), tk, &grid);
    let total_w = targets.total_weight();
    let active: Vec<(Vec<f64>, f64)> = targets
        .active()
        .map(|(t, w)| {
            let values = if params.intensity_matching {
                match_intensities(t.values(), &prewarped)
            } else {
                t.values().to_vec()
            };
            (values, w / total_w)
        })
        .collect();

    let levels = params.levels.min(max_pyramid_levels(&grid)).max(1);
    let mut moving_pyr = vec![(prewarped.clone(), grid)];
    let mut target_pyr = vec![active.clone()];
    for _ in 1..levels {
        let (m, g) = moving_pyr.last().expect("non-empty");
        let next = downsample_buffer(m, g);
        let coarse_targets = target_pyr
            .last()
            .expect("non-empty")
            .iter()
            .map(|(t, w)| (downsample_buffer(t, g).0, *w))
            .collect();
        moving_pyr.push(next);
        target_pyr.push(coarse_targets);
    }

    let full = Level::new(&prewarped, grid, &active);
    let energy_before = full.energy(&vec![[0.0; 3]; grid.len()]);

    let mut u: Vec<[f64; 3]> = Vec::new();
    let mut iterations = 0;
    for level in (0..levels).rev() {
        let (m, g) = &moving_pyr[level];
        u = if u.is_empty() {
            vec![[0.0; 3]; g.len()]
        } else {
            upsample(&u, &moving_pyr[level + 1].1, g)
        };
        let lv = Level::new(m, *g, &target_pyr[level]);
        iterations += lv.run(&mut u, params)?;
    }

    let vectors: Vec<[f64; 3]> = u
        .iter()
        .map(|v| [v[0] * grid.spacing[0], v[1] * grid.spacing[1], v[2] * grid.spacing[2]])
        .collect();
    let energy_after = full.energy(&u);
    if energy_after > energy_before || iterations == 0 {
        return Ok(DeformableFit {
            field: DisplacementField::zeros(grid),
            energy_before,
            energy_after: energy_before,
            iterations: 0,
        });
    }
    let field = DisplacementField::new(grid, vectors)?;
    let jac = crate::transform::jacobian_min_det(&field);
    if jac <= 0.0 {
        return Err(Error::DiffeomorphismViolated(jac));
    }
    Ok(DeformableFit {
        field,
        energy_before,
        energy_after,
        iterations,
    })
}

/// Rescale `target` so its total intensity equals the reference's. A gain
/// rather than a fitted line keeps a zero background at zero, and unlike a
/// least-squares fit it is not biased by residual misalignment.
fn match_intensities(target: &[f64], reference: &[f64]) -> Vec<f64> {
    let st: f64 = target.iter().sum();
    let sr: f64 = reference.iter().sum();
    if st <= 0.0 || sr <= 0.0 {
        return target.to_vec();
    }
    let a = sr / st;
    target.iter().map(|t| a * t).collect()
}

/// Coarse field (voxel units) resampled onto the next finer grid.
fn upsample(u: &[[f64; 3]], coarse: &Grid, fine: &Grid) -> Vec<[f64; 3]> {
    (0..fine.len())
        .map(|o| {
            let [x, y, z] = fine.coords(o);
            let idx = [
                x as f64 / 2.0,
                y as f64 / 2.0,
                if coarse.ndim == 3 { z as f64 / 2.0 } else { 0.0 },
            ];
            let v = sample_clamped(coarse, idx, |k| Vec3(u[k])).0;
            [2.0 * v[0], 2.0 * v[1], 2.0 * v[2]]
        })
        .collect()
}

/// One pyramid level, everything in voxel units.
struct Level<'a> {
    moving: &'a [f64],
    grid: Grid,
    unit: Grid,
    targets: &'a [(Vec<f64>, f64)],
    blend: Vec<f64>,
}

impl<'a> Level<'a> {
    fn new(moving: &'a [f64], grid: Grid, targets: &'a [(Vec<f64>, f64)]) -> Self {
        let mut blend = vec![0.0; grid.len()];
        for (t, w) in targets {
            for (b, v) in blend.iter_mut().zip(t) {
                *b += w * v;
            }
        }
        let unit = Grid {
            spacing: [1.0; 3],
            ..grid
        };
        Level {
            moving,
            grid,
            unit,
            targets,
            blend,
        }
    }

    fn warp(&self, u: &[[f64; 3]]) -> Vec<f64> {
        (0..self.grid.len())
            .map(|o| {
                let [x, y, z] = self.grid.coords(o);
                let d = u[o];
                sample_zero(self.moving, &self.unit, [x as f64 + d[0], y as f64 + d[1], z as f64 + d[2]])
            })
            .collect()
    }

    fn energy(&self, u: &[[f64; 3]]) -> f64 {
        let w = self.warp(u);
        w.iter().zip(&self.blend).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / w.len() as f64
    }

    fn gradient(&self, img: &[f64]) -> Vec<[f64; 3]> {
        let g = &self.grid;
        let d = g.dims;
        (0..g.len())
            .map(|o| {
                let p = g.coords(o);
                let mut out = [0.0; 3];
                for (axis, slot) in out.iter_mut().enumerate().take(g.ndim) {
                    if d[axis] < 2 {
                        continue;
                    }
                    let lo = p[axis].saturating_sub(1);
                    let hi = (p[axis] + 1).min(d[axis] - 1);
                    let (mut a, mut b) = (p, p);
                    a[axis] = lo;
                    b[axis] = hi;
                    *slot = (img[g.offset(b[0], b[1], b[2])] - img[g.offset(a[0], a[1], a[2])]) / (hi - lo) as f64;
                }
                out
            })
            .collect()
    }

    /// Weighted-average demons force at the current field.
    fn force(&self, u: &[[f64; 3]]) -> Vec<[f64; 3]> {
        let warped = self.warp(u);
        let grad = self.gradient(&warped);
        let mut f = vec![[0.0; 3]; warped.len()];
        for (t, w) in self.targets {
            for o in 0..warped.len() {
                let diff = t[o] - warped[o];
                let g = grad[o];
                let denom = g[0] * g[0] + g[1] * g[1] + g[2] * g[2] + diff * diff;
                if denom > 1e-12 {
                    let s = w * diff / denom;
                    for k in 0..3 {
                        f[o][k] += s * g[k];
                    }
                }
            }
        }
        f
    }

    /// `x -> x + d(x) + u(x + d(x))`, then diffusion smoothing.
    fn compose_update(&self, u: &[[f64; 3]], d: &[[f64; 3]], sigma: f64) -> Vec<[f64; 3]> {
        let composed: Vec<[f64; 3]> = (0..self.grid.len())
            .map(|o| {
                let [x, y, z] = self.grid.coords(o);
                let dd = d[o];
                let q = [x as f64 + dd[0], y as f64 + dd[1], z as f64 + dd[2]];
                let v = sample_clamped(&self.unit, q, |k| Vec3(u[k])).0;
                [dd[0] + v[0], dd[1] + v[1], dd[2] + v[2]]
            })
            .collect();
        smooth_vectors(&composed, &self.unit, sigma)
    }

    /// Iterate at this level; returns the number of accepted updates.
    fn run(&self, u: &mut Vec<[f64; 3]>, p: &DeformableRegParams) -> Result<usize> {
        let mut energy = self.energy(u);
        let mut accepted = 0;
        for _ in 0..p.iterations {
            let raw = self.force(u);
            let du = smooth_vectors(&raw, &self.unit, p.sigma_fluid);
            let norm = |v: &[f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            let max = du.iter().map(norm).fold(0.0, f64::max);
            if max < 1e-12 {
                break;
            }
            let mut scale = (p.max_step / max).min(1.0);
            let mut outcome = None;
            let mut jac_failure = None;
            for _ in 0..=p.max_halvings {
                let step: Vec<[f64; 3]> = du.iter().map(|v| [v[0] * scale, v[1] * scale, v[2] * scale]).collect();
                let candidate = self.compose_update(u, &step, p.sigma_diffusion);
                let jac = jacobian_min_det_raw(&self.unit, &candidate);
                if jac > 0.0 {
                    let e = self.energy(&candidate);
                    if e <= energy {
                        let mean = step.iter().map(norm).sum::<f64>() / step.len() as f64;
                        outcome = Some((candidate, e, mean));
                        break;
                    }
                    jac_failure = None;
                } else if jac_failure.is_none() {
                    jac_failure = Some(jac);
                }
                scale *= 0.5;
            }
            match outcome {
                Some((candidate, e, mean)) => {
                    *u = candidate;
                    energy = e;
                    accepted += 1;
                    if mean < p.tolerance {
                        break;
                    }
                }
                None => match jac_failure {
                    Some(jac) => return Err(Error::DiffeomorphismViolated(jac)),
                    None => break,
                },
            }
        }
        Ok(accepted)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Image2D;
    use crate::transform::warp_image;

    fn texture(n: usize) -> Image2D {
        Image2D::from_fn(n, n, [1.0, 1.0], |x, y| {
            let (x, y) = (x as f64, y as f64);
            let c = n as f64 / 2.0;
            let r = (((x - c) / (0.4 * n as f64)).powi(2) + ((y - c) / (0.35 * n as f64)).powi(2)).sqrt();
            if r > 1.0 {
                0.0
            } else {
                (0.5 + 0.25 * (x / 5.0).sin() * (y / 7.0).cos() + 0.2 * (1.0 - r)).clamp(0.0, 1.0)
            }
        })
        .unwrap()
    }

    #[test]
    fn identical_images_give_tiny_field() {
        let img = texture(48);
        let fit = register_deformable(&img, &img, &DeformableRegParams::default(), &TransformChain::identity(2)).unwrap();
        assert!(fit.field.max_magnitude_voxels() < 0.05);
    }

    #[test]
    fn zero_iterations_is_identity() {
        let img = texture(32);
        let other = warp_image(
            &img,
            &TransformChain::single(crate::transform::Affine::translation(2, &[1.0, 0.0])),
            img.grid(),
        )
        .unwrap();
        let p = DeformableRegParams {
            iterations: 0,
            ..Default::default()
        };
        let fit = register_deformable(&img, &other, &p, &TransformChain::identity(2)).unwrap();
        assert_eq!(fit.field.max_magnitude_voxels(), 0.0);
    }

    #[test]
    fn intensity_matching_recovers_gain() {
        let t = [0.0, 0.5, 1.0, 0.25];
        let r: Vec<f64> = t.iter().map(|v| 0.7 * v).collect();
        let m = match_intensities(&t, &r);
        for (a, b) in m.iter().zip(&r) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
