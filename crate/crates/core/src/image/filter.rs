//! Separable Gaussian smoothing, median filtering, area downscaling and
//! binary morphology.

use super::{Grid, Image2D, Image3D, Raster};
use crate::error::{Error, Result};

/// Normalised sampled Gaussian truncated at 4 sigma.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (4.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Convolve `data` along one axis with clamp-to-edge boundaries.
fn convolve_axis(data: &[f64], dims: [usize; 3], axis: usize, kernel: &[f64]) -> Vec<f64> {
    let n = dims[axis];
    if kernel.len() == 1 || n == 1 {
        return data.to_vec();
    }
    let radius = (kernel.len() / 2) as i64;
    let stride = match axis {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    };
    let mut out = vec![0.0; data.len()];
    let mut line = vec![0.0; n];
    let lines_outer: usize = dims.iter().enumerate().filter(|(a, _)| *a != axis).map(|(_, d)| d).product();
    for l in 0..lines_outer {
        // enumerate the start offset of each line along `axis`
        let start = match axis {
            0 => l * dims[0],
            1 => (l / dims[0]) * dims[0] * dims[1] + l % dims[0],
            _ => l,
        };
        for (i, v) in line.iter_mut().enumerate() {
            *v = data[start + i * stride];
        }
        for i in 0..n {
            let mut acc = 0.0;
            for (t, w) in kernel.iter().enumerate() {
                let j = (i as i64 + t as i64 - radius).clamp(0, n as i64 - 1) as usize;
                acc += w * line[j];
            }
            out[start + i * stride] = acc;
        }
    }
    out
}

/// Separable Gaussian over the first `grid.ndim` axes (sigma in voxels).
pub(crate) fn smooth_buffer(data: &[f64], grid: &Grid, sigma: f64) -> Vec<f64> {
    let kernel = gaussian_kernel(sigma);
    let mut out = data.to_vec();
    for axis in 0..grid.ndim {
        out = convolve_axis(&out, grid.dims, axis, &kernel);
    }
    out
}

/// Smooth each component of a vector buffer independently.
pub(crate) fn smooth_vectors(data: &[[f64; 3]], grid: &Grid, sigma: f64) -> Vec<[f64; 3]> {
    if sigma <= 0.0 {
        return data.to_vec();
    }
    let mut out = vec![[0.0; 3]; data.len()];
    for c in 0..grid.ndim {
        let comp: Vec<f64> = data.iter().map(|v| v[c]).collect();
        for (o, v) in out.iter_mut().zip(smooth_buffer(&comp, grid, sigma)) {
            o[c] = v;
        }
    }
    out
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be >= 0, got {sigma}")));
    }
    Ok(())
}

/// Separable 3D Gaussian (sigma in voxels, isotropic), truncated at 4 sigma
/// with clamp-to-edge handling. `sigma == 0` returns the input unchanged.
pub fn gaussian_smooth_3d(vol: &Image3D, sigma: f64) -> Result<Image3D> {
    check_sigma(sigma)?;
    if sigma == 0.0 {
        return Ok(vol.clone());
    }
    Ok(Image3D::from_parts_clamped(*vol.grid(), smooth_buffer(vol.voxels(), vol.grid(), sigma)))
}

pub fn gaussian_smooth_2d(img: &Image2D, sigma: f64) -> Result<Image2D> {
    check_sigma(sigma)?;
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    Ok(Image2D::from_parts_clamped(*img.grid(), smooth_buffer(img.pixels(), img.grid(), sigma)))
}

/// Area-averaging downscale by an integer factor. Trailing rows/columns that
/// do not fill a complete block are dropped.
pub fn downscale_area(img: &Image2D, factor: usize) -> Result<Image2D> {
    if factor == 0 {
        return Err(Error::InvalidParameter("downscale factor must be >= 1".into()));
    }
    if factor > img.width() || factor > img.height() {
        return Err(Error::InvalidParameter(format!(
            "downscale factor {factor} larger than image {}x{}",
            img.width(),
            img.height()
        )));
    }
    if factor == 1 {
        return Ok(img.clone());
    }
    let (w, h) = (img.width() / factor, img.height() / factor);
    let norm = (factor * factor) as f64;
    let sp = img.spacing();
    let pixels = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| {
            let mut acc = 0.0;
            for dy in 0..factor {
                for dx in 0..factor {
                    acc += img.get(x * factor + dx, y * factor + dy);
                }
            }
            acc / norm
        })
        .collect();
    let grid = Grid::new_2d(w, h, [sp[0] * factor as f64, sp[1] * factor as f64])?;
    Ok(Image2D::from_parts_clamped(grid, pixels))
}

/// Square-window median filter with clamp-to-edge handling.
pub fn median_filter(img: &Image2D, radius: usize) -> Image2D {
    if radius == 0 {
        return img.clone();
    }
    let (w, h) = (img.width() as i64, img.height() as i64);
    let r = radius as i64;
    let mut window = Vec::with_capacity(((2 * r + 1) * (2 * r + 1)) as usize);
    let mut out = Vec::with_capacity(img.pixels().len());
    for y in 0..h {
        for x in 0..w {
            window.clear();
            for dy in -r..=r {
                for dx in -r..=r {
                    let xx = (x + dx).clamp(0, w - 1) as usize;
                    let yy = (y + dy).clamp(0, h - 1) as usize;
                    window.push(img.get(xx, yy));
                }
            }
            let mid = window.len() / 2;
            let (_, m, _) = window.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
            out.push(*m);
        }
    }
    Image2D::from_parts_clamped(*img.grid(), out)
}

/// Otsu threshold over 256 equal-width bins on `[0, 1]`. Returns `None` for
/// constant images.
pub fn otsu_threshold(values: &[f64]) -> Option<f64> {
    const BINS: usize = 256;
    let mut hist = [0u64; BINS];
    for v in values {
        hist[((v * BINS as f64) as usize).min(BINS - 1)] += 1;
    }
    if hist.iter().filter(|c| **c > 0).count() < 2 {
        return None;
    }
    let total = values.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, c)| i as f64 * *c as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best, mut best_t) = (-1.0, 0);
    for (t, c) in hist.iter().enumerate().take(BINS - 1) {
        w0 += *c as f64;
        sum0 += t as f64 * *c as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best {
            best = between;
            best_t = t;
        }
    }
    Some((best_t + 1) as f64 / BINS as f64)
}

fn disk_offsets(radius: usize) -> Vec<(i64, i64)> {
    let r = radius as i64;
    let mut v = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                v.push((dx, dy));
            }
        }
    }
    v
}

fn morph(mask: &[bool], w: usize, h: usize, radius: usize, dilate: bool) -> Vec<bool> {
    if radius == 0 {
        return mask.to_vec();
    }
    let offs = disk_offsets(radius);
    let (wi, hi) = (w as i64, h as i64);
    let mut out = vec![false; mask.len()];
    for y in 0..hi {
        for x in 0..wi {
            let hit = |(dx, dy): &(i64, i64)| {
                let (xx, yy) = (x + dx, y + dy);
                // outside pixels count as background
                xx >= 0 && yy >= 0 && xx < wi && yy < hi && mask[(xx + wi * yy) as usize]
            };
            out[(x + wi * y) as usize] = if dilate { offs.iter().any(hit) } else { offs.iter().all(hit) };
        }
    }
    out
}

pub fn erode(mask: &[bool], w: usize, h: usize, radius: usize) -> Vec<bool> {
    morph(mask, w, h, radius, false)
}

pub fn dilate(mask: &[bool], w: usize, h: usize, radius: usize) -> Vec<bool> {
    morph(mask, w, h, radius, true)
}

pub fn open(mask: &[bool], w: usize, h: usize, radius: usize) -> Vec<bool> {
    dilate(&erode(mask, w, h, radius), w, h, radius)
}

pub fn close(mask: &[bool], w: usize, h: usize, radius: usize) -> Vec<bool> {
    erode(&dilate(mask, w, h, radius), w, h, radius)
}
