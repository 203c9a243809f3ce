use serde::{Deserialize, Serialize};

use super::WeightedTargets;
use crate::error::{Error, Result};
use crate::image::{max_pyramid_levels, pyramid, Grid, Point, Raster};
use crate::metrics::{nmi_values, DEFAULT_BINS};
use crate::optim::NelderMead;
use crate::transform::{compose, warp_values, Affine, TransformChain};

/// Degrees of freedom of the affine search.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dof {
    Rigid,
    Similarity,
    Affine,
}

/// Simplex step sizes per parameter kind.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamScales {
    /// Radians.
    pub rotation: f64,
    /// Natural log of the axis scale.
    pub log_scale: f64,
    pub shear: f64,
    /// In voxels of the current pyramid level.
    pub translation_voxels: f64,
}

impl Default for ParamScales {
    fn default() -> Self {
        ParamScales {
            rotation: 0.05,
            log_scale: 0.02,
            shear: 0.02,
            translation_voxels: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AffineRegParams {
    pub levels: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub scales: ParamScales,
    /// DOF used at the finer levels; the coarsest level is always rigid.
    pub dof: Dof,
    pub bins: usize,
}

impl Default for AffineRegParams {
    fn default() -> Self {
        AffineRegParams {
            levels: 3,
            max_iterations: 200,
            tolerance: 1e-5,
            scales: ParamScales::default(),
            dof: Dof::Affine,
            bins: DEFAULT_BINS,
        }
    }
}

impl AffineRegParams {
    pub fn validate(&self) -> Result<()> {
        let s = &self.scales;
        if self.levels == 0 || self.max_iterations == 0 || !(self.tolerance > 0.0) || self.bins < 2 {
            return Err(Error::InvalidParameter(format!("invalid affine parameters {self:?}")));
        }
        if [s.rotation, s.log_scale, s.shear, s.translation_voxels].iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidParameter("parameter scales must be > 0".into()));
        }
        Ok(())
    }
}

/// Result of an affine registration.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineFit {
    pub transform: Affine,
    /// Objective (lower is better) at the returned transform, full resolution.
    pub objective: f64,
    /// Objective at the starting point, full resolution.
    pub initial_objective: f64,
    /// False when some level stopped at the iteration cap.
    pub converged: bool,
}

/// Parameter layout: rotations, log-scales, shears, translations (µm).
#[derive(Clone, Copy)]
struct Layout {
    dim: usize,
}

impl Layout {
    fn n_rot(&self) -> usize {
        if self.dim == 2 {
            1
        } else {
            3
        }
    }
    fn rot(&self) -> std::ops::Range<usize> {
        0..self.n_rot()
    }
    fn log_scale(&self) -> std::ops::Range<usize> {
        let s = self.n_rot();
        s..s + self.dim
    }
    fn shear(&self) -> std::ops::Range<usize> {
        let s = self.n_rot() + self.dim;
        s..s + self.n_rot()
    }
    fn trans(&self) -> std::ops::Range<usize> {
        let s = 2 * self.n_rot() + self.dim;
        s..s + self.dim
    }
    fn len(&self) -> usize {
        2 * self.n_rot() + 2 * self.dim
    }

    /// Active search directions: (full indices moved together, step size).
    fn directions(&self, dof: Dof, scales: &ParamScales, spacing: [f64; 3]) -> Vec<(Vec<usize>, f64)> {
        let mut out: Vec<(Vec<usize>, f64)> = self.rot().map(|i| (vec![i], scales.rotation)).collect();
        match dof {
            Dof::Rigid => {}
            Dof::Similarity => out.push((self.log_scale().collect(), scales.log_scale)),
            Dof::Affine => {
                out.extend(self.log_scale().map(|i| (vec![i], scales.log_scale)));
                out.extend(self.shear().map(|i| (vec![i], scales.shear)));
            }
        }
        for (axis, i) in self.trans().enumerate() {
            out.push((vec![i], scales.translation_voxels * spacing[axis]));
        }
        out
    }

    fn affine(&self, p: &[f64], center: Point) -> Affine {
        let mut lin = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let sc: Vec<f64> = p[self.log_scale()].iter().map(|v| v.exp()).collect();
        let sh = &p[self.shear()];
        let t = &p[self.trans()];
        if self.dim == 2 {
            let (s, c) = p[0].sin_cos();
            // R * [[1, sh], [0, 1]] * diag(sc)
            let m = [[c, c * sh[0] - s], [s, s * sh[0] + c]];
            for i in 0..2 {
                for j in 0..2 {
                    lin[i][j] = m[i][j] * sc[j];
                }
            }
            Affine::from_matrix(2, lin, [t[0], t[1], 0.0], [center[0], center[1], 0.0])
        } else {
            let rx = rot3(0, p[0]);
            let ry = rot3(1, p[1]);
            let rz = rot3(2, p[2]);
            let shm = [[1.0, sh[0], sh[1]], [0.0, 1.0, sh[2]], [0.0, 0.0, 1.0]];
            let r = mul3(&rz, &mul3(&ry, &rx));
            let m = mul3(&r, &shm);
            for i in 0..3 {
                for j in 0..3 {
                    lin[i][j] = m[i][j] * sc[j];
                }
            }
            Affine::from_matrix(3, lin, [t[0], t[1], t[2]], center)
        }
    }
}

fn rot3(axis: usize, a: f64) -> [[f64; 3]; 3] {
    let (s, c) = a.sin_cos();
    match axis {
        0 => [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]],
        1 => [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]],
        _ => [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
    }
}

fn mul3(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    m
}

/// Weighted `-nmi` of `moving` warped through `chain` against every active target.
fn multiterm_cost<R: Raster>(moving: &R, chain: &TransformChain, targets: &WeightedTargets<R>, bins: usize) -> Result<f64> {
    let (warped, _) = warp_values(moving.values(), moving.grid(), chain, targets.grid());
    let mut total = 0.0;
    for (t, w) in targets.active() {
        total -= w * nmi_values(&warped, t.values(), None, bins)?;
    }
    Ok(total)
}

/// Weighted multi-target objective: `sum_m w_m * -nmi(warp(moving, t then tk), target_m)`.
/// `t` is applied to reference coordinates first, then `tk`. Zero-weight
/// terms are never evaluated.
pub fn eval_multiterm<R: Raster>(
    moving: &R,
    t: &TransformChain,
    tk: &TransformChain,
    targets: &WeightedTargets<R>,
    bins: usize,
) -> Result<f64> {
    let chain = compose(tk, t)?;
    check_dims(moving, &chain, targets.grid())?;
    multiterm_cost(moving, &chain, targets, bins)
}

fn check_dims<R: Raster>(moving: &R, chain: &TransformChain, grid: &Grid) -> Result<()> {
    if moving.grid().ndim != grid.ndim || chain.dim() != grid.ndim {
        return Err(Error::DimensionMismatch(format!(
            "moving is {}D, chain {}D, targets {}D",
            moving.grid().ndim,
            chain.dim(),
            grid.ndim
        )));
    }
    Ok(())
}

fn check_entropy<R: Raster>(img: &R) -> Result<()> {
    if img.is_constant() {
        Err(Error::DegenerateEntropy)
    } else {
        Ok(())
    }
}

/// Translation aligning intensity centres of mass (maps fixed space to moving space).
pub fn center_of_mass_init<R: Raster>(moving: &R, fixed: &R) -> Result<Affine> {
    let com = |img: &R| -> Result<Point> {
        let g = img.grid();
        let mut acc = [0.0; 3];
        let mut mass = 0.0;
        for (o, v) in img.values().iter().enumerate() {
            let [x, y, z] = g.coords(o);
            let p = g.point(x, y, z);
            for k in 0..3 {
                acc[k] += v * p[k];
            }
            mass += v;
        }
        if mass <= 0.0 {
            return Err(Error::InvalidImage("image has no intensity mass".into()));
        }
        Ok([acc[0] / mass, acc[1] / mass, acc[2] / mass])
    };
    let (m, f) = (com(moving)?, com(fixed)?);
    let dim = fixed.grid().ndim;
    Ok(Affine::translation(dim, &[m[0] - f[0], m[1] - f[1], m[2] - f[2]]))
}

/// Affine registration of `moving` to `fixed`, starting from `init`
/// (a fixed-to-moving map). Returns the full transform.
pub fn register_affine<R: Raster>(moving: &R, fixed: &R, params: &AffineRegParams, init: &Affine) -> Result<AffineFit> {
    if init.det().abs() < 1e-12 {
        return Err(Error::Singular(init.det().abs()));
    }
    let tk = TransformChain::single(*init);
    let targets = WeightedTargets::single(fixed.clone());
    let mut fit = optimize(moving, &tk, &targets, params)?;
    fit.transform = init.compose(&fit.transform);
    Ok(fit)
}

/// Minimise [`eval_multiterm`] over an affine refinement `T` applied before
/// `tk`. Returns `T` alone.
pub fn register_affine_multiterm<R: Raster>(
    moving: &R,
    tk: &TransformChain,
    targets: &WeightedTargets<R>,
    params: &AffineRegParams,
) -> Result<AffineFit> {
    optimize(moving, tk, targets, params)
}

fn optimize<R: Raster>(
    moving: &R,
    tk: &TransformChain,
    targets: &WeightedTargets<R>,
    params: &AffineRegParams,
) -> Result<AffineFit> {
    params.validate()?;
    let grid = *targets.grid();
    check_dims(moving, tk, &grid)?;
    check_entropy(moving)?;
    for (t, _) in targets.active() {
        check_entropy(t)?;
    }
    let levels = params
        .levels
        .min(max_pyramid_levels(&grid))
        .min(max_pyramid_levels(moving.grid()))
        .max(1);
    let moving_pyr = pyramid(moving, levels)?;
    let mut level_targets: Vec<Vec<(R, f64)>> = vec![Vec::new(); levels];
    for (t, w) in targets.items() {
        for (level, img) in pyramid(t, levels)?.into_iter().enumerate() {
            level_targets[level].push((img, *w));
        }
    }
    let level_targets: Vec<WeightedTargets<R>> =
        level_targets.into_iter().map(|items| WeightedTargets { items }).collect();

    let layout = Layout { dim: grid.ndim };
    let center = grid.center();
    let cost_at = |level: usize, p: &[f64]| -> f64 {
        let chain = compose(tk, &TransformChain::single(layout.affine(p, center))).expect("same dimension");
        multiterm_cost(&moving_pyr[level], &chain, &level_targets[level], params.bins).unwrap_or(f64::INFINITY)
    };

    let mut p = vec![0.0; layout.len()];
    let initial_objective = cost_at(0, &p);
    let mut converged = true;
    for level in (0..levels).rev() {
        let lgrid = *level_targets[level].grid();
        let coarsest = level == levels - 1;
        let dof = if coarsest { Dof::Rigid } else { params.dof };
        if coarsest {
            p = translation_search(&layout, &p, &lgrid, |q| cost_at(level, q));
        }
        let dirs = layout.directions(dof, &params.scales, lgrid.spacing);
        let base = p.clone();
        let expand = |u: &[f64]| -> Vec<f64> {
            let mut q = base.clone();
            for ((idx, step), v) in dirs.iter().zip(u) {
                for &i in idx {
                    q[i] += v * step;
                }
            }
            q
        };
        let nm = NelderMead {
            max_iterations: params.max_iterations,
            tolerance: params.tolerance,
            restarts: 1,
        };
        let m = nm.minimize(|u| cost_at(level, &expand(u)), &vec![0.0; dirs.len()], &vec![1.0; dirs.len()]);
        converged &= m.converged;
        p = expand(&m.x);
    }
    let objective = cost_at(0, &p);
    let identity = layout.affine(&vec![0.0; layout.len()], center);
    if !objective.is_finite() && !initial_objective.is_finite() {
        return Err(Error::Registration("objective is undefined at every evaluated transform".into()));
    }
    if objective > initial_objective {
        return Ok(AffineFit {
            transform: identity,
            objective: initial_objective,
            initial_objective,
            converged,
        });
    }
    Ok(AffineFit {
        transform: layout.affine(&p, center),
        objective,
        initial_objective,
        converged,
    })
}

/// Exhaustive translation offsets over +-25% of the extent, 5 steps per axis.
fn translation_search(layout: &Layout, p: &[f64], grid: &Grid, mut cost: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let extent = grid.extent();
    let steps = [0.0, -0.125, 0.125, -0.25, 0.25];
    let mut best = p.to_vec();
    let mut best_cost = cost(p);
    let total = steps.len().pow(layout.dim as u32);
    for code in 0..total {
        let mut q = p.to_vec();
        let mut c = code;
        for (axis, i) in layout.trans().enumerate() {
            q[i] += steps[c % steps.len()] * extent[axis];
            c /= steps.len();
        }
        if code == 0 {
            continue;
        }
        let v = cost(&q);
        if v < best_cost {
            best_cost = v;
            best = q;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Image2D;
    use crate::transform::warp_image;

    fn blobs(w: usize, h: usize) -> Image2D {
        Image2D::from_fn(w, h, [1.0, 1.0], |x, y| {
            let (x, y) = (x as f64, y as f64);
            let g = |cx: f64, cy: f64, sx: f64, sy: f64| (-((x - cx) / sx).powi(2) - ((y - cy) / sy).powi(2)).exp();
            (0.6 * g(30.0, 28.0, 10.0, 6.0) + 0.4 * g(40.0, 40.0, 5.0, 9.0) + 0.3 * g(22.0, 42.0, 4.0, 4.0)).min(1.0)
        })
        .unwrap()
    }

    #[test]
    fn layout_identity() {
        for dim in [2, 3] {
            let l = Layout { dim };
            assert!(l.affine(&vec![0.0; l.len()], [1.0, 2.0, 3.0]).is_identity(1e-15));
        }
    }

    #[test]
    fn self_registration_stays_at_identity() {
        let img = blobs(64, 64);
        let fit = register_affine(&img, &img, &AffineRegParams::default(), &Affine::identity(2)).unwrap();
        let t = fit.transform.translation_vec();
        assert!(t[0].abs() < 0.5 && t[1].abs() < 0.5, "{t:?}");
        assert!(fit.objective <= fit.initial_objective);
    }

    #[test]
    fn recovers_translation() {
        let img = blobs(64, 64);
        let shift = TransformChain::single(Affine::translation(2, &[5.0, 0.0]));
        let fixed = warp_image(&img, &shift, img.grid()).unwrap();
        let fit = register_affine(&img, &fixed, &AffineRegParams::default(), &Affine::identity(2)).unwrap();
        let q = fit.transform.apply([32.0, 32.0, 0.0]);
        assert!((q[0] - 37.0).abs() < 0.5 && (q[1] - 32.0).abs() < 0.5, "{q:?}");
    }

    #[test]
    fn zero_weight_terms_are_skipped() {
        let img = blobs(32, 32);
        // a constant target would make nmi fail if it were evaluated
        let flat = Image2D::filled(32, 32, [1.0, 1.0], 0.5).unwrap();
        let targets = WeightedTargets::new(vec![(flat, 0.0), (img.clone(), 1.0)]).unwrap();
        let id = TransformChain::identity(2);
        let v = eval_multiterm(&img, &id, &id, &targets, 64).unwrap();
        assert_eq!(v, -2.0);
    }
}
