//! Section clean-up: area downscaling, median filtering, then removal of
//! small specks by opening and closing an Otsu-thresholded tissue mask.

use serde::{Deserialize, Serialize};

use super::filter::{close, downscale_area, median_filter, open, otsu_threshold};
use super::{Image2D, Raster};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub downscale: usize,
    pub median_radius: usize,
    /// Disk radius for the open-then-close on the tissue mask.
    pub morph_radius: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            downscale: 1,
            median_radius: 1,
            morph_radius: 2,
        }
    }
}

pub fn preprocess_section(img: &Image2D, cfg: &PreprocessConfig) -> Result<Image2D> {
    let small = downscale_area(img, cfg.downscale)?;
    let filtered = median_filter(&small, cfg.median_radius);
    let Some(level) = otsu_threshold(filtered.pixels()) else {
        return Ok(filtered);
    };
    if cfg.morph_radius == 0 {
        return Ok(filtered);
    }
    let (w, h) = (filtered.width(), filtered.height());
    let tissue: Vec<bool> = filtered.pixels().iter().map(|v| *v >= level).collect();
    let cleaned = close(&open(&tissue, w, h, cfg.morph_radius), w, h, cfg.morph_radius);
    let pixels = filtered
        .pixels()
        .iter()
        .zip(&cleaned)
        .map(|(v, keep)| if *keep { *v } else { 0.0 })
        .collect();
    Ok(Image2D::from_parts_clamped(*filtered.grid(), pixels))
}
