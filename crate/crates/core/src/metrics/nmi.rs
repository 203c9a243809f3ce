use crate::error::{Error, Result};
use crate::image::Raster;

pub const DEFAULT_BINS: usize = 64;

/// Joint intensity histogram over equal-width bins on `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointHistogram {
    bins: usize,
    counts: Vec<u64>,
    total: u64,
}

#[inline]
fn bin_of(v: f64, bins: usize) -> usize {
    ((v * bins as f64) as usize).min(bins - 1)
}

impl JointHistogram {
    /// Accumulate pairs `(a[i], b[i])`, restricted to `mask[i]` when given.
    pub fn from_pairs(a: &[f64], b: &[f64], mask: Option<&[bool]>, bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 bins, got {bins}")));
        }
        if a.len() != b.len() || mask.is_some_and(|m| m.len() != a.len()) {
            return Err(Error::DimensionMismatch(format!(
                "histogram inputs of length {} and {}",
                a.len(),
                b.len()
            )));
        }
        let mut counts = vec![0u64; bins * bins];
        let mut total = 0;
        for i in 0..a.len() {
            if mask.is_none_or(|m| m[i]) {
                counts[bin_of(a[i], bins) * bins + bin_of(b[i], bins)] += 1;
                total += 1;
            }
        }
        Ok(JointHistogram { bins, counts, total })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    /// Count for row bin `i` (first image) and column bin `j` (second image).
    pub fn count(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.bins + j]
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn marginal_a(&self) -> Vec<u64> {
        (0..self.bins).map(|i| (0..self.bins).map(|j| self.count(i, j)).sum()).collect()
    }

    pub fn marginal_b(&self) -> Vec<u64> {
        (0..self.bins).map(|j| (0..self.bins).map(|i| self.count(i, j)).sum()).collect()
    }

    /// `(H(A), H(B), H(A,B))` in nats.
    pub fn entropies(&self) -> (f64, f64, f64) {
        let n = self.total as f64;
        let h = |counts: &mut dyn Iterator<Item = u64>| -> f64 {
            counts
                .filter(|c| *c > 0)
                .map(|c| {
                    let p = c as f64 / n;
                    -p * p.ln()
                })
                .sum()
        };
        (
            h(&mut self.marginal_a().into_iter()),
            h(&mut self.marginal_b().into_iter()),
            h(&mut self.counts.iter().copied()),
        )
    }

    /// `(H(A) + H(B)) / H(A,B)`, in `(1, 2]`.
    pub fn nmi(&self) -> Result<f64> {
        if self.total == 0 {
            return Err(Error::DegenerateEntropy);
        }
        let (ha, hb, hab) = self.entropies();
        if ha <= 0.0 || hb <= 0.0 {
            return Err(Error::DegenerateEntropy);
        }
        Ok((ha + hb) / hab)
    }
}

/// NMI of two value buffers, optionally restricted to a mask.
pub fn nmi_values(a: &[f64], b: &[f64], mask: Option<&[bool]>, bins: usize) -> Result<f64> {
    JointHistogram::from_pairs(a, b, mask, bins)?.nmi()
}

/// Normalised mutual information `(H(A) + H(B)) / H(A, B)` of two equally sized images.
pub fn nmi<R: Raster>(a: &R, b: &R, bins: usize) -> Result<f64> {
    if !a.grid().same_shape(b.grid()) {
        return Err(Error::DimensionMismatch(format!(
            "nmi of {:?} and {:?}",
            a.grid().dims,
            b.grid().dims
        )));
    }
    nmi_values(a.values(), b.values(), None, bins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Image2D;

    fn img(v: &[f64]) -> Image2D {
        Image2D::new(v.len(), 1, [1.0, 1.0], v.to_vec()).unwrap()
    }

    /// Direct entropy computation from explicit probability tables.
    fn entropy(p: &[f64]) -> f64 {
        p.iter().filter(|x| **x > 0.0).map(|x| -x * x.ln()).sum()
    }

    #[test]
    fn self_nmi_is_two() {
        let a = Image2D::from_fn(16, 16, [1.0, 1.0], |x, y| ((x * 7 + y * 3) % 11) as f64 / 10.0).unwrap();
        assert_eq!(nmi(&a, &a, 64).unwrap(), 2.0);
    }

    #[test]
    fn relabelled_binary_pair() {
        let a = img(&[0.0, 0.0, 1.0, 1.0]);
        let b = img(&[1.0, 1.0, 0.0, 0.0]);
        // joint has two cells of 1/2: H(A)=H(B)=H(A,B)=ln 2
        let expect = (entropy(&[0.5, 0.5]) * 2.0) / entropy(&[0.5, 0.5]);
        assert!((nmi(&a, &b, 2).unwrap() - expect).abs() < 1e-12);
        assert!((expect - 2.0).abs() < 1e-15);
    }

    #[test]
    fn independent_binary_pair() {
        let a = img(&[0.0, 0.0, 1.0, 1.0]);
        let b = img(&[0.0, 1.0, 0.0, 1.0]);
        let expect = (entropy(&[0.5, 0.5]) * 2.0) / entropy(&[0.25; 4]);
        assert!((nmi(&a, &b, 2).unwrap() - expect).abs() < 1e-12);
        assert!((expect - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_image_is_degenerate() {
        let a = img(&[0.3; 8]);
        let b = img(&[0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7]);
        assert!(matches!(nmi(&a, &b, 8), Err(Error::DegenerateEntropy)));
        assert!(matches!(nmi(&b, &a, 8), Err(Error::DegenerateEntropy)));
    }

    #[test]
    fn mask_restricts_samples() {
        let a = [0.0, 1.0, 0.0, 1.0, 0.5];
        let b = [0.0, 1.0, 0.0, 1.0, 0.9];
        let mask = [true, true, true, true, false];
        let h = JointHistogram::from_pairs(&a, &b, Some(&mask), 4).unwrap();
        assert_eq!(h.total(), 4);
        assert_eq!(h.nmi().unwrap(), 2.0);
    }

    #[test]
    fn bins_must_be_at_least_two() {
        let a = img(&[0.0, 1.0]);
        assert!(nmi(&a, &a, 1).is_err());
    }
}
