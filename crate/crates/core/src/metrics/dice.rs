use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::SegmentationMask;

/// `2|A ∩ B| / (|A| + |B|)`; two empty masks score 1.
pub fn dice(a: &SegmentationMask, b: &SegmentationMask) -> Result<f64> {
    if !a.grid().same_shape(b.grid()) {
        return Err(Error::DimensionMismatch(format!(
            "dice of {:?} and {:?}",
            a.grid().dims,
            b.grid().dims
        )));
    }
    Ok(dice_bits(a.bits(), b.bits()))
}

pub(crate) fn dice_bits(a: &[bool], b: &[bool]) -> f64 {
    let (mut inter, mut na, mut nb) = (0usize, 0usize, 0usize);
    for (x, y) in a.iter().zip(b) {
        na += *x as usize;
        nb += *y as usize;
        inter += (*x && *y) as usize;
    }
    if na + nb == 0 {
        1.0
    } else {
        2.0 * inter as f64 / (na + nb) as f64
    }
}

/// One aggregate row of a Dice report, e.g. `model vs gt*`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiceRow {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
}

impl DiceRow {
    /// Mean and sample standard deviation (n - 1) of per-image scores.
    pub fn from_scores(name: impl Into<String>, scores: &[f64]) -> Self {
        let n = scores.len() as f64;
        let mean = if scores.is_empty() { f64::NAN } else { scores.iter().sum::<f64>() / n };
        let sd = if scores.len() < 2 {
            0.0
        } else {
            (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        DiceRow {
            name: name.into(),
            mean,
            sd,
        }
    }
}

impl std::fmt::Display for DiceRow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: mean {:.4}, SD {:.4}", self.name, self.mean, self.sd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(bits: &[u8]) -> SegmentationMask {
        SegmentationMask::new_2d(bits.len(), 1, bits.iter().map(|b| *b == 1).collect()).unwrap()
    }

    #[test]
    fn basic_cases() {
        assert_eq!(dice(&mask(&[1, 1, 0]), &mask(&[1, 1, 0])).unwrap(), 1.0);
        assert_eq!(dice(&mask(&[1, 1, 0, 0]), &mask(&[0, 0, 1, 1])).unwrap(), 0.0);
        assert_eq!(dice(&mask(&[1, 1, 0]), &mask(&[0, 1, 1])).unwrap(), 0.5);
        assert_eq!(dice(&mask(&[0, 0]), &mask(&[0, 0])).unwrap(), 1.0);
    }

    #[test]
    fn mismatched_dims() {
        assert!(dice(&mask(&[1, 0]), &mask(&[1, 0, 0])).is_err());
    }

    #[test]
    fn row_format() {
        let row = DiceRow {
            name: "model vs gt*".into(),
            mean: 0.4948,
            sd: 0.2512,
        };
        assert_eq!(row.to_string(), "model vs gt*: mean 0.4948, SD 0.2512");
        let json = serde_json::to_string(&row).unwrap();
        assert_eq!(json, r#"{"name":"model vs gt*","mean":0.4948,"sd":0.2512}"#);
    }

    #[test]
    fn identical_scores_have_zero_sd() {
        let row = DiceRow::from_scores("x", &[1.0, 1.0, 1.0]);
        assert_eq!((row.mean, row.sd), (1.0, 0.0));
    }
}
