use crate::error::{Error, Result};
use crate::image::Point;

type Mat = [[f64; 3]; 3];

const IDENTITY: Mat = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// `p -> linear * (p - center) + center + translation`, in micrometres.
///
/// For 2D transforms the third row/column of `linear` is the identity and
/// the `z` coordinate passes through.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Affine {
    dim: usize,
    linear: Mat,
    translation: [f64; 3],
    center: [f64; 3],
}

fn mat_mul(a: &Mat, b: &Mat) -> Mat {
    let mut m = [[0.0; 3]; 3];
    for (i, row) in m.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    m
}

fn mat_vec(a: &Mat, v: [f64; 3]) -> [f64; 3] {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

fn det3(m: &Mat) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn inv3(m: &Mat, det: f64) -> Mat {
    let c = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    [
        [c(1, 2, 1, 2) / det, -c(0, 2, 1, 2) / det, c(0, 1, 1, 2) / det],
        [-c(1, 2, 0, 2) / det, c(0, 2, 0, 2) / det, -c(0, 1, 0, 2) / det],
        [c(1, 2, 0, 1) / det, -c(0, 2, 0, 1) / det, c(0, 1, 0, 1) / det],
    ]
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

impl Affine {
    pub fn identity(dim: usize) -> Self {
        assert!(dim == 2 || dim == 3, "affine dimension must be 2 or 3");
        Affine {
            dim,
            linear: IDENTITY,
            translation: [0.0; 3],
            center: [0.0; 3],
        }
    }

    /// Build from a row-major `dim x dim` matrix and `dim`-vectors.
    pub fn new(dim: usize, linear: &[f64], translation: &[f64], center: &[f64]) -> Result<Self> {
        if !(dim == 2 || dim == 3) {
            return Err(Error::InvalidParameter(format!("affine dimension {dim}")));
        }
        if linear.len() != dim * dim || translation.len() != dim || center.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "affine of dimension {dim} needs {} matrix entries and {dim}-vectors",
                dim * dim
            )));
        }
        let mut a = Affine::identity(dim);
        for i in 0..dim {
            for j in 0..dim {
                a.linear[i][j] = linear[i * dim + j];
            }
            a.translation[i] = translation[i];
            a.center[i] = center[i];
        }
        let all = linear.iter().chain(translation).chain(center);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("affine entries must be finite".into()));
        }
        if a.det() == 0.0 {
            return Err(Error::Singular(0.0));
        }
        Ok(a)
    }

    pub fn translation(dim: usize, t: &[f64]) -> Self {
        let mut a = Affine::identity(dim);
        a.translation[..dim].copy_from_slice(&t[..dim]);
        a
    }

    /// Counter-clockwise rotation by `theta` radians about `center` (2D).
    pub fn rotation_2d(theta: f64, center: [f64; 2]) -> Self {
        let (s, c) = theta.sin_cos();
        let mut a = Affine::identity(2);
        a.linear[0][0] = c;
        a.linear[0][1] = -s;
        a.linear[1][0] = s;
        a.linear[1][1] = c;
        a.center = [center[0], center[1], 0.0];
        a
    }

    /// Isotropic scale about `center`.
    pub fn scaling(dim: usize, scale: f64, center: &[f64]) -> Self {
        let mut a = Affine::identity(dim);
        for i in 0..dim {
            a.linear[i][i] = scale;
            a.center[i] = center[i];
        }
        a
    }

    /// `linear` given as a full 3x3 block; only the leading `dim` block is used.
    pub(crate) fn from_matrix(dim: usize, linear: Mat, translation: [f64; 3], center: [f64; 3]) -> Self {
        let mut a = Affine::identity(dim);
        for i in 0..dim {
            for j in 0..dim {
                a.linear[i][j] = linear[i][j];
            }
            a.translation[i] = translation[i];
            a.center[i] = center[i];
        }
        a
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major `dim x dim` linear part.
    pub fn linear(&self) -> Vec<f64> {
        (0..self.dim)
            .flat_map(|i| (0..self.dim).map(move |j| (i, j)))
            .map(|(i, j)| self.linear[i][j])
            .collect()
    }

    pub fn translation_vec(&self) -> Vec<f64> {
        self.translation[..self.dim].to_vec()
    }

    pub fn center(&self) -> Vec<f64> {
        self.center[..self.dim].to_vec()
    }

    pub fn det(&self) -> f64 {
        det3(&self.linear)
    }

    #[inline]
    pub fn apply(&self, p: Point) -> Point {
        let q = add(add(mat_vec(&self.linear, sub(p, self.center)), self.center), self.translation);
        if self.dim == 2 {
            [q[0], q[1], p[2]]
        } else {
            q
        }
    }

    /// `self ∘ other`: apply `other` first, then `self`. Keeps `other`'s centre.
    pub fn compose(&self, other: &Affine) -> Affine {
        debug_assert_eq!(self.dim, other.dim);
        let linear = mat_mul(&self.linear, &other.linear);
        // self(other(x)) = La Lb (x - cb) + La (cb + tb - ca) + ca + ta
        let shifted = mat_vec(&self.linear, sub(add(other.center, other.translation), self.center));
        let translation = sub(add(add(shifted, self.center), self.translation), other.center);
        let mut out = Affine::from_matrix(self.dim, linear, translation, other.center);
        if self.dim == 2 {
            out.translation[2] = 0.0;
        }
        out
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        let lin = self.linear.iter().flatten().zip(IDENTITY.iter().flatten()).all(|(a, b)| (a - b).abs() <= tol);
        lin && self.translation.iter().all(|t| t.abs() <= tol)
    }
}

/// Inverse with the same centre. Errors when `|det| < 1e-12`.
pub fn invert_affine(a: &Affine) -> Result<Affine> {
    let det = a.det();
    if det.abs() < 1e-12 {
        return Err(Error::Singular(det.abs()));
    }
    let inv = inv3(&a.linear, det);
    let t = mat_vec(&inv, a.translation);
    Ok(Affine::from_matrix(a.dim, inv, [-t[0], -t[1], -t[2]], a.center))
}
