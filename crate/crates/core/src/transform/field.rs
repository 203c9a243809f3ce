use crate::error::{Error, Result};
use crate::image::{sample_clamped, Grid, Point};

/// Dense displacement vectors (physical micrometres) on a regular grid.
///
/// `apply(p) = p + u(p)`, with `u` linearly interpolated and clamped to the
/// grid edge outside its support.
#[derive(Clone, Debug, PartialEq)]
pub struct DisplacementField {
    grid: Grid,
    vectors: Vec<[f64; 3]>,
}

/// Fixed-point inversion settings.
pub const INVERSE_ITERATIONS: usize = 20;
pub const INVERSE_TOLERANCE_VOXELS: f64 = 0.01;

impl DisplacementField {
    pub fn new(grid: Grid, vectors: Vec<[f64; 3]>) -> Result<Self> {
        if vectors.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "field has {} vectors, grid needs {}",
                vectors.len(),
                grid.len()
            )));
        }
        if vectors.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("field vectors must be finite".into()));
        }
        let mut f = DisplacementField { grid, vectors };
        if grid.ndim == 2 {
            f.vectors.iter_mut().for_each(|v| v[2] = 0.0);
        }
        Ok(f)
    }

    pub fn zeros(grid: Grid) -> Self {
        DisplacementField {
            grid,
            vectors: vec![[0.0; 3]; grid.len()],
        }
    }

    /// Sample `f(physical point)` at every grid point.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(Point) -> [f64; 3]) -> Self {
        let vectors = (0..grid.len())
            .map(|o| {
                let [x, y, z] = grid.coords(o);
                let mut v = f(grid.point(x, y, z));
                if grid.ndim == 2 {
                    v[2] = 0.0;
                }
                v
            })
            .collect();
        DisplacementField { grid, vectors }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.ndim
    }

    pub fn vectors(&self) -> &[[f64; 3]] {
        &self.vectors
    }

    #[inline]
    pub fn displacement(&self, p: Point) -> [f64; 3] {
        let idx = self.grid.to_index(p);
        let v = sample_clamped(&self.grid, idx, |o| Vec3(self.vectors[o]));
        v.0
    }

    #[inline]
    pub fn apply(&self, p: Point) -> Point {
        let u = self.displacement(p);
        [p[0] + u[0], p[1] + u[1], p[2] + u[2]]
    }

    fn voxel_norm(&self, d: [f64; 3]) -> f64 {
        (0..self.grid.ndim)
            .map(|a| (d[a] / self.grid.spacing[a]).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Solve `y + u(y) = p` by fixed-point iteration `y <- p - u(y)`.
    pub fn apply_inverse(&self, p: Point) -> Point {
        let mut y = p;
        for _ in 0..INVERSE_ITERATIONS {
            let u = self.displacement(y);
            let next = [p[0] - u[0], p[1] - u[1], p[2] - u[2]];
            let step = self.voxel_norm([next[0] - y[0], next[1] - y[1], next[2] - y[2]]);
            y = next;
            if step < INVERSE_TOLERANCE_VOXELS {
                break;
            }
        }
        y
    }

    /// Inverse field on the same grid: `v(x) = -u(x + v(x))`, iterated until
    /// the largest update falls below 0.01 voxel or 20 iterations.
    pub fn inverse(&self) -> DisplacementField {
        let grid = self.grid;
        let mut v: Vec<[f64; 3]> = self.vectors.iter().map(|u| [-u[0], -u[1], -u[2]]).collect();
        for _ in 0..INVERSE_ITERATIONS {
            let mut max_step: f64 = 0.0;
            let next: Vec<[f64; 3]> = (0..grid.len())
                .map(|o| {
                    let [x, y, z] = grid.coords(o);
                    let p = grid.point(x, y, z);
                    let q = [p[0] + v[o][0], p[1] + v[o][1], p[2] + v[o][2]];
                    let u = self.displacement(q);
                    let n = [-u[0], -u[1], -u[2]];
                    max_step = max_step.max(self.voxel_norm([n[0] - v[o][0], n[1] - v[o][1], n[2] - v[o][2]]));
                    n
                })
                .collect();
            v = next;
            if max_step < INVERSE_TOLERANCE_VOXELS {
                break;
            }
        }
        DisplacementField { grid, vectors: v }
    }

    /// Largest vector magnitude in voxels.
    pub fn max_magnitude_voxels(&self) -> f64 {
        self.vectors.iter().map(|v| self.voxel_norm(*v)).fold(0.0, f64::max)
    }

    pub fn mean_magnitude_voxels(&self) -> f64 {
        self.vectors.iter().map(|v| self.voxel_norm(*v)).sum::<f64>() / self.vectors.len() as f64
    }

    /// Root-mean-square of the vector difference, in physical units.
    pub fn rms_difference(&self, other: &DisplacementField) -> f64 {
        let s: f64 = self
            .vectors
            .iter()
            .zip(&other.vectors)
            .map(|(a, b)| (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>())
            .sum();
        (s / self.vectors.len() as f64).sqrt()
    }
}

#[derive(Clone, Copy)]
pub(crate) struct Vec3(pub [f64; 3]);

impl std::ops::Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

/// Minimum of `det(I + grad u)` over the grid (central differences, one-sided
/// at the borders). Needs at least two samples per axis.
pub fn jacobian_min_det(f: &DisplacementField) -> f64 {
    jacobian_min_det_raw(&f.grid, &f.vectors)
}

pub(crate) fn jacobian_min_det_raw(grid: &Grid, u: &[[f64; 3]]) -> f64 {
    let n = grid.ndim;
    let d = grid.dims;
    let mut min = f64::INFINITY;
    for z in 0..d[2] {
        for y in 0..d[1] {
            for x in 0..d[0] {
                let pos = [x, y, z];
                let mut jac = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
                for axis in 0..n {
                    let i = pos[axis];
                    let (lo, hi) = if i == 0 {
                        (0, 1.min(d[axis] - 1))
                    } else if i == d[axis] - 1 {
                        (i - 1, i)
                    } else {
                        (i - 1, i + 1)
                    };
                    if lo == hi {
                        continue;
                    }
                    let mut a = pos;
                    let mut b = pos;
                    a[axis] = lo;
                    b[axis] = hi;
                    let ua = u[grid.offset(a[0], a[1], a[2])];
                    let ub = u[grid.offset(b[0], b[1], b[2])];
                    let h = (hi - lo) as f64 * grid.spacing[axis];
                    for comp in 0..n {
                        jac[comp][axis] += (ub[comp] - ua[comp]) / h;
                    }
                }
                let det = if n == 2 {
                    jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0]
                } else {
                    jac[0][0] * (jac[1][1] * jac[2][2] - jac[1][2] * jac[2][1])
                        - jac[0][1] * (jac[1][0] * jac[2][2] - jac[1][2] * jac[2][0])
                        + jac[0][2] * (jac[1][0] * jac[2][1] - jac[1][1] * jac[2][0])
                };
                min = min.min(det);
            }
        }
    }
    min
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid2(n: usize) -> Grid {
        Grid::new_2d(n, n, [1.0, 1.0]).unwrap()
    }

    #[test]
    fn zero_and_uniform_fields_have_unit_jacobian() {
        assert_eq!(jacobian_min_det(&DisplacementField::zeros(grid2(8))), 1.0);
        let t = DisplacementField::from_fn(grid2(8), |_| [3.0, -2.0, 0.0]);
        assert_eq!(jacobian_min_det(&t), 1.0);
    }

    #[test]
    fn linear_field_jacobian() {
        let g = Grid::new_2d(10, 12, [2.0, 0.5]).unwrap();
        let f = DisplacementField::from_fn(g, |p| [0.1 * p[0], 0.1 * p[1], 0.0]);
        assert!((jacobian_min_det(&f) - 1.21).abs() < 1e-6);
    }

    #[test]
    fn point_inverse_round_trip() {
        let g = grid2(32);
        let f = DisplacementField::from_fn(g, |p| {
            [1.5 * (p[1] / 5.0).sin(), 1.0 * (p[0] / 7.0).cos(), 0.0]
        });
        for p in [[10.0, 12.0, 0.0], [20.5, 3.25, 0.0], [5.0, 25.0, 0.0]] {
            let q = f.apply(f.apply_inverse(p));
            assert!((q[0] - p[0]).abs() < 0.05 && (q[1] - p[1]).abs() < 0.05, "{q:?} vs {p:?}");
        }
    }

    #[test]
    fn grid_inverse_composes_to_identity() {
        let g = grid2(32);
        let f = DisplacementField::from_fn(g, |p| [1.2 * (p[1] / 6.0).sin(), 0.8 * (p[0] / 5.0).sin(), 0.0]);
        let inv = f.inverse();
        for y in 4..28 {
            for x in 4..28 {
                let p = g.point(x, y, 0);
                let q = f.apply(inv.apply(p));
                assert!((q[0] - p[0]).abs() < 0.1 && (q[1] - p[1]).abs() < 0.1);
            }
        }
    }
}
