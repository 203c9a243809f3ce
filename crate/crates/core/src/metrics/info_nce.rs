use std::path::Path;

use crate::error::{Error, Result};

/// `2N` embedding vectors where rows `2k` and `2k + 1` are a positive pair.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureBatch {
    vectors: Vec<Vec<f64>>,
    temperature: f64,
}

impl FeatureBatch {
    pub fn new(vectors: Vec<Vec<f64>>, temperature: f64) -> Result<Self> {
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(Error::InvalidParameter(format!("temperature must be > 0, got {temperature}")));
        }
        if vectors.len() < 2 || !vectors.len().is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "need an even number (>= 2) of vectors, got {}",
                vectors.len()
            )));
        }
        let dim = vectors[0].len();
        for (i, v) in vectors.iter().enumerate() {
            if v.len() != dim || dim == 0 {
                return Err(Error::DimensionMismatch(format!("vector {i} has length {}", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParameter(format!("vector {i} is not finite")));
            }
            if v.iter().all(|x| *x == 0.0) {
                return Err(Error::InvalidParameter(format!("vector {i} is zero")));
            }
        }
        Ok(FeatureBatch { vectors, temperature })
    }

    /// Number of positive pairs `N`.
    pub fn pairs(&self) -> usize {
        self.vectors.len() / 2
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    /// Negatives contrasted against each anchor: every sample except the
    /// anchor and its partner.
    pub fn negatives_per_anchor(&self) -> usize {
        self.vectors.len() - 2
    }

    #[inline]
    pub fn partner(i: usize) -> usize {
        i ^ 1
    }

    fn normalised(&self) -> Vec<Vec<f64>> {
        self.vectors
            .iter()
            .map(|v| {
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter().map(|x| x / n).collect()
            })
            .collect()
    }

    fn similarities(&self, unit: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let m = unit.len();
        let mut s = vec![vec![0.0; m]; m];
        for i in 0..m {
            for k in i..m {
                let d: f64 = unit[i].iter().zip(&unit[k]).map(|(a, b)| a * b).sum();
                s[i][k] = d;
                s[k][i] = d;
            }
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InfoNce {
    /// Mean over all `2N` anchors.
    pub loss: f64,
    pub per_anchor: Vec<f64>,
}

/// Softmax over `k != i` of `s[i][k] / tau`, plus the log-normaliser.
fn anchor_softmax(sim: &[f64], i: usize, tau: f64) -> (Vec<f64>, f64) {
    let max = sim
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != i)
        .map(|(_, s)| s / tau)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = sim
        .iter()
        .enumerate()
        .map(|(k, s)| if k == i { 0.0 } else { (s / tau - max).exp() })
        .collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= z);
    (p, max + z.ln())
}

/// NT-Xent: cosine similarities, per-anchor
/// `-log(exp(s(i,j)/tau) / sum_{k != i} exp(s(i,k)/tau))`, averaged over
/// every anchor (each pair counted in both directions).
pub fn info_nce(batch: &FeatureBatch) -> Result<InfoNce> {
    let unit = batch.normalised();
    let sim = batch.similarities(&unit);
    let tau = batch.temperature;
    let per_anchor: Vec<f64> = (0..batch.len())
        .map(|i| {
            let (_, log_z) = anchor_softmax(&sim[i], i, tau);
            log_z - sim[i][FeatureBatch::partner(i)] / tau
        })
        .collect();
    let loss = per_anchor.iter().sum::<f64>() / per_anchor.len() as f64;
    Ok(InfoNce { loss, per_anchor })
}

/// Analytic gradient of the mean loss with respect to the raw vectors.
pub fn info_nce_gradient(batch: &FeatureBatch) -> Result<Vec<Vec<f64>>> {
    let unit = batch.normalised();
    let sim = batch.similarities(&unit);
    let tau = batch.temperature;
    let m = batch.len();
    let scale = 1.0 / (m as f64 * tau);
    // a[i][k] = d(loss)/d(s_ik) through anchor i only
    let mut a = vec![vec![0.0; m]; m];
    for i in 0..m {
        let (p, _) = anchor_softmax(&sim[i], i, tau);
        for k in 0..m {
            if k != i {
                let target = if k == FeatureBatch::partner(i) { 1.0 } else { 0.0 };
                a[i][k] = scale * (p[k] - target);
            }
        }
    }
    let dim = unit[0].len();
    let grads = (0..m)
        .map(|i| {
            let mut g_unit = vec![0.0; dim];
            for k in (0..m).filter(|k| *k != i) {
                let w = a[i][k] + a[k][i];
                for (g, u) in g_unit.iter_mut().zip(&unit[k]) {
                    *g += w * u;
                }
            }
            // project through the normalisation z / |z|
            let norm = batch.vectors[i].iter().map(|x| x * x).sum::<f64>().sqrt();
            let radial: f64 = g_unit.iter().zip(&unit[i]).map(|(g, u)| g * u).sum();
            g_unit.iter().zip(&unit[i]).map(|(g, u)| (g - radial * u) / norm).collect()
        })
        .collect();
    Ok(grads)
}

/// Read a feature CSV (one vector per row, pair-adjacent order). A leading
/// non-numeric header row is skipped.
pub fn read_feature_csv(path: &Path, temperature: f64) -> Result<FeatureBatch> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
    let mut vectors = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(|f| f.trim().parse::<f64>()).collect();
        match parsed {
            Ok(v) => vectors.push(v),
            Err(_) if row == 0 => continue,
            Err(e) => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    msg: format!("row {row}: {e}"),
                })
            }
        }
    }
    FeatureBatch::new(vectors, temperature)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct summation over the definition, no log-sum-exp shift.
    fn oracle(vectors: &[Vec<f64>], tau: f64) -> Vec<f64> {
        let cos = |a: &[f64], b: &[f64]| {
            let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            d / (na * nb)
        };
        (0..vectors.len())
            .map(|i| {
                let j = i ^ 1;
                let num = (cos(&vectors[i], &vectors[j]) / tau).exp();
                let den: f64 = (0..vectors.len())
                    .filter(|k| *k != i)
                    .map(|k| (cos(&vectors[i], &vectors[k]) / tau).exp())
                    .sum();
                -(num / den).ln()
            })
            .collect()
    }

    fn random_batch(rng: &mut ChaCha8Rng, n: usize, dim: usize, tau: f64) -> FeatureBatch {
        let v = (0..2 * n)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        FeatureBatch::new(v, tau).unwrap()
    }

    #[test]
    fn single_pair_has_zero_loss() {
        let b = FeatureBatch::new(vec![vec![1.0, 2.0], vec![-3.0, 0.5]], 0.1).unwrap();
        let out = info_nce(&b).unwrap();
        assert_eq!(out.loss, 0.0);
        assert_eq!(b.negatives_per_anchor(), 0);
    }

    #[test]
    fn orthogonal_negatives() {
        let v = vec![
            vec![1.0, 0.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
        ];
        let b = FeatureBatch::new(v.clone(), 1.0).unwrap();
        let out = info_nce(&b).unwrap();
        let e = std::f64::consts::E;
        let expect = -(e / (e + 2.0)).ln();
        for (got, direct) in out.per_anchor.iter().zip(oracle(&v, 1.0)) {
            assert!((got - expect).abs() < 1e-10);
            assert!((got - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &(n, tau) in &[(2, 0.5), (5, 0.1), (16, 0.07)] {
            let b = random_batch(&mut rng, n, 12, tau);
            let got = info_nce(&b).unwrap();
            let direct = oracle(b.vectors(), tau);
            for (g, d) in got.per_anchor.iter().zip(&direct) {
                assert!((g - d).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn thirty_negatives_for_sixteen_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = random_batch(&mut rng, 16, 8, 0.5);
        assert_eq!(b.len(), 32);
        assert_eq!(b.negatives_per_anchor(), 30);
    }

    #[test]
    fn near_orthogonal_random_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = random_batch(&mut rng, 16, 4096, 1.0);
        let loss = info_nce(&b).unwrap().loss;
        assert!((loss - 31f64.ln()).abs() < 0.2, "{loss}");
    }

    #[test]
    fn invalid_inputs() {
        assert!(FeatureBatch::new(vec![vec![1.0], vec![1.0]], 0.0).is_err());
        assert!(FeatureBatch::new(vec![vec![1.0], vec![0.0]], 1.0).is_err());
        assert!(FeatureBatch::new(vec![vec![1.0]], 1.0).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = random_batch(&mut rng, 3, 5, 0.3);
        let g = info_nce_gradient(&b).unwrap();
        let h = 1e-6;
        for i in 0..b.len() {
            for d in 0..5 {
                let mut plus = b.vectors().to_vec();
                let mut minus = b.vectors().to_vec();
                plus[i][d] += h;
                minus[i][d] -= h;
                let fp = info_nce(&FeatureBatch::new(plus, 0.3).unwrap()).unwrap().loss;
                let fm = info_nce(&FeatureBatch::new(minus, 0.3).unwrap()).unwrap().loss;
                let fd = (fp - fm) / (2.0 * h);
                assert!((fd - g[i][d]).abs() < 1e-5, "{i},{d}: {fd} vs {}", g[i][d]);
            }
        }
    }
}
