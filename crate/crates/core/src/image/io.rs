//! Section images (8/16-bit grayscale PNG or TIFF), binary mask PNGs, and
//! raw float32 volumes with a JSON header.

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma};
use serde::{Deserialize, Serialize};

use super::{Grid, Image2D, Image3D, Raster, SegmentationMask};
use crate::error::{io_err, Error, Result};

fn image_err(path: &Path) -> impl FnOnce(image::ImageError) -> Error + '_ {
    move |source| Error::ImageIo {
        path: path.to_path_buf(),
        source,
    }
}

/// Source bit depth of a decoded section.
pub fn bit_depth(img: &DynamicImage) -> u8 {
    match img {
        DynamicImage::ImageLuma16(_)
        | DynamicImage::ImageLumaA16(_)
        | DynamicImage::ImageRgb16(_)
        | DynamicImage::ImageRgba16(_) => 16,
        DynamicImage::ImageRgb32F(_) | DynamicImage::ImageRgba32F(_) => 32,
        _ => 8,
    }
}

/// Load a section and normalise it to `[0, 1]`.
///
/// Grayscale inputs are scaled by their bit depth and inverted when
/// `invert` is set (bright slide, dark tissue). Colour inputs are converted
/// to a single-channel optical density, which is already tissue-bright.
pub fn load_section(path: &Path, spacing: [f64; 2], invert: bool) -> Result<Image2D> {
    let dynimg = image::open(path).map_err(image_err(path))?;
    let (w, h) = (dynimg.width() as usize, dynimg.height() as usize);
    let pixels: Vec<f64> = if dynimg.color().has_color() {
        let rgb = dynimg.to_rgb32f();
        // optical density of the mean transmitted intensity, 8-bit floor
        let floor = 1.0f64 / 256.0;
        let norm = -(floor.log10());
        rgb.pixels()
            .map(|p| {
                let i = (p.0.iter().map(|c| *c as f64).sum::<f64>() / 3.0).clamp(floor, 1.0);
                (-(i.log10()) / norm).clamp(0.0, 1.0)
            })
            .collect()
    } else {
        let gray = dynimg.to_luma16();
        gray.pixels()
            .map(|p| {
                let v = p.0[0] as f64 / 65535.0;
                if invert {
                    1.0 - v
                } else {
                    v
                }
            })
            .collect()
    };
    Image2D::new(w, h, spacing, pixels)
}

/// Write a section as a 16-bit grayscale PNG (inverting if requested).
pub fn save_section_png(img: &Image2D, path: &Path, invert: bool) -> Result<()> {
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(
        img.width() as u32,
        img.height() as u32,
        |x, y| {
            let v = img.get(x as usize, y as usize);
            let v = if invert { 1.0 - v } else { v };
            Luma([(v * 65535.0).round() as u16])
        },
    );
    buf.save(path).map_err(image_err(path))
}

pub fn save_mask_png(mask: &SegmentationMask, path: &Path) -> Result<()> {
    let g = mask.grid();
    if g.ndim != 2 {
        return Err(Error::DimensionMismatch("mask PNGs must be 2D".into()));
    }
    let bits = mask.bits();
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_fn(g.dims[0] as u32, g.dims[1] as u32, |x, y| {
            Luma([if bits[x as usize + g.dims[0] * y as usize] { 255 } else { 0 }])
        });
    buf.save(path).map_err(image_err(path))
}

/// Any nonzero pixel is foreground.
pub fn load_mask_png(path: &Path) -> Result<SegmentationMask> {
    let img = image::open(path).map_err(image_err(path))?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    SegmentationMask::new_2d(w, h, img.pixels().map(|p| p.0[0] > 0).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeHeader {
    pub dims: [usize; 3],
    pub spacing_um: [f64; 3],
}

/// `<stem>.json` header and `<stem>.raw` little-endian float32 data.
pub fn volume_paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("json"), stem.with_extension("raw"))
}

fn write_f32_le(path: &Path, values: impl Iterator<Item = f64>) -> Result<()> {
    let bytes: Vec<u8> = values.flat_map(|v| (v as f32).to_le_bytes()).collect();
    fs::write(path, bytes).map_err(io_err(path))
}

pub(crate) fn read_f32_le(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() != expected * 4 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            msg: format!("expected {} bytes, found {}", expected * 4, bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

pub fn write_volume(vol: &Image3D, stem: &Path) -> Result<()> {
    write_raw_volume(vol.grid(), vol.voxels(), stem)
}

pub(crate) fn write_raw_volume(grid: &Grid, values: &[f64], stem: &Path) -> Result<()> {
    let (json, raw) = volume_paths(stem);
    let header = VolumeHeader {
        dims: grid.dims,
        spacing_um: grid.spacing,
    };
    fs::write(&json, serde_json::to_string_pretty(&header)?).map_err(io_err(&json))?;
    write_f32_le(&raw, values.iter().copied())
}

pub fn read_volume(stem: &Path) -> Result<Image3D> {
    let (json, raw) = volume_paths(stem);
    let text = fs::read_to_string(&json).map_err(io_err(&json))?;
    let header: VolumeHeader = serde_json::from_str(&text)?;
    let grid = Grid::new_3d(header.dims, header.spacing_um)?;
    let values = read_f32_le(&raw, grid.len())?;
    Image3D::from_parts(grid, values)
}

/// Binary volume stored with the same raw layout (0.0 / 1.0).
pub fn write_mask_volume(mask: &SegmentationMask, stem: &Path) -> Result<()> {
    write_raw_volume(mask.grid(), &mask.to_values(), stem)
}

pub fn read_mask_volume(stem: &Path) -> Result<SegmentationMask> {
    let vol = read_volume(stem)?;
    Ok(SegmentationMask::threshold(&vol, 0.5))
}
