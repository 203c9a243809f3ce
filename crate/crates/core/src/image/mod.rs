//! Scalar image containers on regular grids with physical spacing.
//!
//! Images carry intensities in `[0, 1]`. Pixel `(i, j, k)` sits at physical
//! position `(i * sx, j * sy, k * sz)` in micrometres; 2D grids have depth 1
//! and a physical `z` of zero.

pub mod filter;
pub mod io;
pub mod preprocess;
pub mod pyramid;

use crate::error::{Error, Result};

pub use filter::{gaussian_smooth_2d, gaussian_smooth_3d};
pub use preprocess::{preprocess_section, PreprocessConfig};
pub use pyramid::{max_pyramid_levels, pyramid};

/// A physical point in micrometres. 2D quantities leave `z` untouched.
pub type Point = [f64; 3];

/// Sampling lattice shared by images, masks and displacement fields.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub ndim: usize,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
}

impl Grid {
    pub fn new_2d(width: usize, height: usize, spacing: [f64; 2]) -> Result<Self> {
        let g = Grid {
            ndim: 2,
            dims: [width, height, 1],
            spacing: [spacing[0], spacing[1], 1.0],
        };
        g.validate()?;
        Ok(g)
    }

    pub fn new_3d(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        let g = Grid {
            ndim: 3,
            dims,
            spacing,
        };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::InvalidImage(format!("zero-sized grid {:?}", self.dims)));
        }
        if self.spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidImage(format!(
                "spacing must be positive, got {:?}",
                self.spacing
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn offset(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, offset: usize) -> [usize; 3] {
        let x = offset % self.dims[0];
        let r = offset / self.dims[0];
        [x, r % self.dims[1], r / self.dims[1]]
    }

    /// Physical position of a (possibly fractional) index.
    #[inline]
    pub fn to_physical(&self, idx: [f64; 3]) -> Point {
        let z = if self.ndim == 3 { idx[2] * self.spacing[2] } else { idx[2] };
        [idx[0] * self.spacing[0], idx[1] * self.spacing[1], z]
    }

    #[inline]
    pub fn point(&self, x: usize, y: usize, z: usize) -> Point {
        self.to_physical([x as f64, y as f64, if self.ndim == 3 { z as f64 } else { 0.0 }])
    }

    #[inline]
    pub fn to_index(&self, p: Point) -> [f64; 3] {
        let z = if self.ndim == 3 { p[2] / self.spacing[2] } else { 0.0 };
        [p[0] / self.spacing[0], p[1] / self.spacing[1], z]
    }

    /// Physical centre of the grid.
    pub fn center(&self) -> Point {
        let c = |a: usize| (self.dims[a] as f64 - 1.0) / 2.0;
        self.to_physical([c(0), c(1), if self.ndim == 3 { c(2) } else { 0.0 }])
    }

    /// Physical extent `(n - 1) * spacing` per axis.
    pub fn extent(&self) -> [f64; 3] {
        let e = |a: usize| (self.dims[a] as f64 - 1.0) * self.spacing[a];
        [e(0), e(1), if self.ndim == 3 { e(2) } else { 0.0 }]
    }

    /// Grid with every axis decimated by two (pixel `k` lands on old pixel `2k`).
    pub fn decimated(&self) -> Grid {
        let mut g = *self;
        for a in 0..self.ndim {
            g.dims[a] = self.dims[a].div_ceil(2);
            g.spacing[a] = self.spacing[a] * 2.0;
        }
        g
    }

    #[inline]
    pub fn contains_index(&self, idx: [f64; 3]) -> bool {
        const EPS: f64 = 1e-9;
        (0..self.ndim).all(|a| idx[a] >= -EPS && idx[a] <= self.dims[a] as f64 - 1.0 + EPS)
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.ndim == other.ndim && self.dims == other.dims
    }
}

/// Linear interpolation with zero padding outside the grid.
#[inline]
pub(crate) fn sample_zero(data: &[f64], grid: &Grid, idx: [f64; 3]) -> f64 {
    let d = grid.dims;
    let x0 = idx[0].floor();
    let y0 = idx[1].floor();
    let fx = idx[0] - x0;
    let fy = idx[1] - y0;
    let (xi, yi) = (x0 as i64, y0 as i64);
    if grid.ndim == 2 {
        if xi < -1 || yi < -1 || xi >= d[0] as i64 || yi >= d[1] as i64 {
            return 0.0;
        }
        let at = |x: i64, y: i64| -> f64 {
            if x < 0 || y < 0 || x >= d[0] as i64 || y >= d[1] as i64 {
                0.0
            } else {
                data[x as usize + d[0] * y as usize]
            }
        };
        let top = (1.0 - fx) * at(xi, yi) + fx * at(xi + 1, yi);
        let bottom = (1.0 - fx) * at(xi, yi + 1) + fx * at(xi + 1, yi + 1);
        (1.0 - fy) * top + fy * bottom
    } else {
        let z0 = idx[2].floor();
        let fz = idx[2] - z0;
        let zi = z0 as i64;
        if xi < -1 || yi < -1 || zi < -1 || xi >= d[0] as i64 || yi >= d[1] as i64 || zi >= d[2] as i64
        {
            return 0.0;
        }
        let at = |x: i64, y: i64, z: i64| -> f64 {
            if x < 0 || y < 0 || z < 0 || x >= d[0] as i64 || y >= d[1] as i64 || z >= d[2] as i64 {
                0.0
            } else {
                data[x as usize + d[0] * (y as usize + d[1] * z as usize)]
            }
        };
        let plane = |z: i64| {
            let top = (1.0 - fx) * at(xi, yi, z) + fx * at(xi + 1, yi, z);
            let bottom = (1.0 - fx) * at(xi, yi + 1, z) + fx * at(xi + 1, yi + 1, z);
            (1.0 - fy) * top + fy * bottom
        };
        (1.0 - fz) * plane(zi) + fz * plane(zi + 1)
    }
}

/// Linear interpolation with coordinates clamped to the grid.
#[inline]
pub(crate) fn sample_clamped<T, F>(grid: &Grid, idx: [f64; 3], fetch: F) -> T
where
    T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
    F: Fn(usize) -> T,
{
    let d = grid.dims;
    let clamp = |v: f64, n: usize| v.clamp(0.0, n as f64 - 1.0);
    let x = clamp(idx[0], d[0]);
    let y = clamp(idx[1], d[1]);
    let x0 = (x.floor() as usize).min(d[0] - 1);
    let y0 = (y.floor() as usize).min(d[1] - 1);
    let x1 = (x0 + 1).min(d[0] - 1);
    let y1 = (y0 + 1).min(d[1] - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let plane = |z: usize| {
        let o = d[0] * d[1] * z;
        let top = fetch(o + x0 + d[0] * y0) * (1.0 - fx) + fetch(o + x1 + d[0] * y0) * fx;
        let bottom = fetch(o + x0 + d[0] * y1) * (1.0 - fx) + fetch(o + x1 + d[0] * y1) * fx;
        top * (1.0 - fy) + bottom * fy
    };
    if grid.ndim == 2 {
        plane(0)
    } else {
        let z = clamp(idx[2], d[2]);
        let z0 = (z.floor() as usize).min(d[2] - 1);
        let z1 = (z0 + 1).min(d[2] - 1);
        let fz = z - z0 as f64;
        plane(z0) * (1.0 - fz) + plane(z1) * fz
    }
}

fn check_values(grid: &Grid, values: &[f64]) -> Result<()> {
    if values.len() != grid.len() {
        return Err(Error::InvalidImage(format!(
            "expected {} values for grid {:?}, got {}",
            grid.len(),
            grid.dims,
            values.len()
        )));
    }
    if let Some(v) = values.iter().find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v))) {
        return Err(Error::InvalidImage(format!("intensity {v} outside [0, 1]")));
    }
    Ok(())
}

/// Shared behaviour of [`Image2D`] and [`Image3D`].
pub trait Raster: Sized + Clone + Send + Sync {
    fn grid(&self) -> &Grid;
    fn values(&self) -> &[f64];
    /// Build from a grid and values, validating the intensity invariant.
    fn from_parts(grid: Grid, values: Vec<f64>) -> Result<Self>;

    /// Internal constructor for values already known to be convex combinations
    /// of valid intensities; clamps round-off.
    #[doc(hidden)]
    fn from_parts_clamped(grid: Grid, mut values: Vec<f64>) -> Self {
        for v in values.iter_mut() {
            *v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
        }
        Self::from_parts(grid, values).expect("clamped values are valid")
    }

    /// Interpolated value at a physical point; 0 outside the grid.
    fn sample_physical(&self, p: Point) -> f64 {
        sample_zero(self.values(), self.grid(), self.grid().to_index(p))
    }

    fn is_constant(&self) -> bool {
        let v = self.values();
        v.iter().all(|x| *x == v[0])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Image2D {
    grid: Grid,
    pixels: Vec<f64>,
}

impl Image2D {
    pub fn new(width: usize, height: usize, spacing: [f64; 2], pixels: Vec<f64>) -> Result<Self> {
        let grid = Grid::new_2d(width, height, spacing)?;
        check_values(&grid, &pixels)?;
        Ok(Image2D { grid, pixels })
    }

    pub fn filled(width: usize, height: usize, spacing: [f64; 2], value: f64) -> Result<Self> {
        Self::new(width, height, spacing, vec![value; width * height])
    }

    /// Build from a closure over pixel coordinates.
    pub fn from_fn(
        width: usize,
        height: usize,
        spacing: [f64; 2],
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, spacing, pixels)
    }

    pub fn width(&self) -> usize {
        self.grid.dims[0]
    }
    pub fn height(&self) -> usize {
        self.grid.dims[1]
    }
    pub fn spacing(&self) -> [f64; 2] {
        [self.grid.spacing[0], self.grid.spacing[1]]
    }
    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[x + self.grid.dims[0] * y]
    }

    /// Bilinear sample at continuous pixel coordinates; 0 outside the grid.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        sample_zero(&self.pixels, &self.grid, [x, y, 0.0])
    }

    pub fn with_spacing(mut self, spacing: [f64; 2]) -> Result<Self> {
        self.grid = Grid::new_2d(self.width(), self.height(), spacing)?;
        Ok(self)
    }
}

impl Raster for Image2D {
    fn grid(&self) -> &Grid {
        &self.grid
    }
    fn values(&self) -> &[f64] {
        &self.pixels
    }
    fn from_parts(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if grid.ndim != 2 {
            return Err(Error::DimensionMismatch("Image2D needs a 2D grid".into()));
        }
        check_values(&grid, &values)?;
        Ok(Image2D { grid, pixels: values })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Image3D {
    grid: Grid,
    voxels: Vec<f64>,
}

impl Image3D {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], voxels: Vec<f64>) -> Result<Self> {
        let grid = Grid::new_3d(dims, spacing)?;
        check_values(&grid, &voxels)?;
        Ok(Image3D { grid, voxels })
    }

    pub fn from_fn(
        dims: [usize; 3],
        spacing: [f64; 3],
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut voxels = Vec::with_capacity(dims.iter().product());
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    voxels.push(f(x, y, z));
                }
            }
        }
        Self::new(dims, spacing, voxels)
    }

    /// Stack equally sized sections along z with the given slice thickness.
    pub fn from_slices(slices: &[Image2D], thickness: f64) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::InvalidImage("cannot stack zero slices".into()))?;
        let (w, h) = (first.width(), first.height());
        let mut voxels = Vec::with_capacity(w * h * slices.len());
        for s in slices {
            if s.width() != w || s.height() != h {
                return Err(Error::DimensionMismatch(format!(
                    "slice {}x{} does not match {}x{}",
                    s.width(),
                    s.height(),
                    w,
                    h
                )));
            }
            voxels.extend_from_slice(s.pixels());
        }
        let sp = first.spacing();
        Self::new([w, h, slices.len()], [sp[0], sp[1], thickness], voxels)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims
    }
    pub fn spacing(&self) -> [f64; 3] {
        self.grid.spacing
    }
    pub fn voxels(&self) -> &[f64] {
        &self.voxels
    }
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.voxels[self.grid.offset(x, y, z)]
    }

    /// Trilinear sample at continuous voxel coordinates; 0 outside.
    pub fn sample(&self, x: f64, y: f64, z: f64) -> f64 {
        sample_zero(&self.voxels, &self.grid, [x, y, z])
    }

    pub fn slice(&self, z: usize) -> Image2D {
        let [w, h, _] = self.grid.dims;
        let start = w * h * z;
        Image2D {
            grid: Grid::new_2d(w, h, [self.grid.spacing[0], self.grid.spacing[1]])
                .expect("valid parent grid"),
            pixels: self.voxels[start..start + w * h].to_vec(),
        }
    }

    pub fn slices(&self) -> Vec<Image2D> {
        (0..self.grid.dims[2]).map(|z| self.slice(z)).collect()
    }
}

impl Raster for Image3D {
    fn grid(&self) -> &Grid {
        &self.grid
    }
    fn values(&self) -> &[f64] {
        &self.voxels
    }
    fn from_parts(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if grid.ndim != 3 {
            return Err(Error::DimensionMismatch("Image3D needs a 3D grid".into()));
        }
        check_values(&grid, &values)?;
        Ok(Image3D { grid, voxels: values })
    }
}

/// Binary segmentation on a 2D or 3D grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentationMask {
    grid: Grid,
    bits: Vec<bool>,
}

impl SegmentationMask {
    pub fn new(grid: Grid, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != grid.len() {
            return Err(Error::InvalidImage(format!(
                "mask has {} bits, grid needs {}",
                bits.len(),
                grid.len()
            )));
        }
        Ok(SegmentationMask { grid, bits })
    }

    pub fn new_2d(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        Self::new(Grid::new_2d(width, height, [1.0, 1.0])?, bits)
    }

    pub fn zeros(grid: Grid) -> Self {
        SegmentationMask {
            bits: vec![false; grid.len()],
            grid,
        }
    }

    /// Threshold an intensity raster at `level` (inclusive).
    pub fn threshold<R: Raster>(img: &R, level: f64) -> Self {
        SegmentationMask {
            grid: *img.grid(),
            bits: img.values().iter().map(|v| *v >= level).collect(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// The mask as a 0/1 intensity buffer (useful for resampling).
    pub fn to_values(&self) -> Vec<f64> {
        self.bits.iter().map(|b| if *b { 1.0 } else { 0.0 }).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_grid_point_is_exact() {
        let img = Image2D::from_fn(4, 3, [1.0, 1.0], |x, y| (x * 3 + y) as f64 / 20.0).unwrap();
        for y in 0..3 {
            for x in 0..4 {
                assert_eq!(img.sample(x as f64, y as f64), img.get(x, y));
            }
        }
    }

    #[test]
    fn bilinear_midpoint_averages() {
        let img = Image2D::new(2, 1, [1.0, 1.0], vec![0.2, 0.7]).unwrap();
        assert_eq!(img.sample(0.5, 0.0), (0.2 + 0.7) / 2.0);
    }

    #[test]
    fn out_of_bounds_is_background() {
        let img = Image2D::filled(5, 5, [1.0, 1.0], 0.8).unwrap();
        assert_eq!(img.sample(-5.0, -5.0), 0.0);
        assert_eq!(img.sample(10.0, 2.0), 0.0);
    }

    #[test]
    fn trilinear_matches_stored_voxels() {
        let vol = Image3D::from_fn([3, 4, 5], [1.0, 2.0, 3.0], |x, y, z| {
            (x + 2 * y + 3 * z) as f64 / 30.0
        })
        .unwrap();
        assert_eq!(vol.sample(1.0, 2.0, 3.0), vol.get(1, 2, 3));
        let mid = vol.sample(1.5, 2.0, 3.0);
        assert!((mid - (vol.get(1, 2, 3) + vol.get(2, 2, 3)) / 2.0).abs() < 1e-15);
        assert_eq!(vol.sample(-3.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn rejects_invalid_intensities() {
        assert!(Image2D::new(1, 1, [1.0, 1.0], vec![1.5]).is_err());
        assert!(Image2D::new(1, 1, [1.0, 1.0], vec![f64::NAN]).is_err());
        assert!(Image2D::new(2, 1, [1.0, 1.0], vec![0.5]).is_err());
        assert!(Image2D::new(1, 1, [0.0, 1.0], vec![0.5]).is_err());
    }

    #[test]
    fn physical_index_round_trip() {
        let g = Grid::new_3d([10, 20, 5], [2.0, 3.0, 50.0]).unwrap();
        let p = g.to_physical([1.5, 2.25, 3.0]);
        assert_eq!(p, [3.0, 6.75, 150.0]);
        assert_eq!(g.to_index(p), [1.5, 2.25, 3.0]);
        assert_eq!(g.decimated().dims, [5, 10, 3]);
    }
}
