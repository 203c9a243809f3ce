use std::sync::Arc;

use super::affine::{invert_affine, Affine};
use super::field::DisplacementField;
use crate::error::{Error, Result};
use crate::image::Point;

/// One element of a [`TransformChain`].
#[derive(Clone, Debug, PartialEq)]
pub enum Transform {
    Affine(Affine),
    Field(Arc<DisplacementField>),
}

impl Transform {
    pub fn dim(&self) -> usize {
        match self {
            Transform::Affine(a) => a.dim(),
            Transform::Field(f) => f.dim(),
        }
    }

    #[inline]
    pub fn apply(&self, p: Point) -> Point {
        match self {
            Transform::Affine(a) => a.apply(p),
            Transform::Field(f) => f.apply(p),
        }
    }

    pub fn apply_inverse(&self, p: Point) -> Result<Point> {
        Ok(match self {
            Transform::Affine(a) => invert_affine(a)?.apply(p),
            Transform::Field(f) => f.apply_inverse(p),
        })
    }
}

impl From<Affine> for Transform {
    fn from(a: Affine) -> Self {
        Transform::Affine(a)
    }
}

impl From<DisplacementField> for Transform {
    fn from(f: DisplacementField) -> Self {
        Transform::Field(Arc::new(f))
    }
}

/// Ordered transforms; a point passes through the elements front to back.
///
/// Chains map reference (fixed) coordinates into the moving image, which
/// is what backward warping needs.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformChain {
    dim: usize,
    elements: Vec<Transform>,
}

impl TransformChain {
    pub fn identity(dim: usize) -> Self {
        TransformChain {
            dim,
            elements: Vec::new(),
        }
    }

    pub fn new(dim: usize, elements: Vec<Transform>) -> Result<Self> {
        if let Some(e) = elements.iter().find(|e| e.dim() != dim) {
            return Err(Error::DimensionMismatch(format!(
                "chain of dimension {dim} cannot hold a {}D element",
                e.dim()
            )));
        }
        let mut chain = TransformChain::identity(dim);
        for e in elements {
            chain.push(e);
        }
        Ok(chain)
    }

    pub fn single(t: impl Into<Transform>) -> Self {
        let t = t.into();
        TransformChain {
            dim: t.dim(),
            elements: vec![t],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn elements(&self) -> &[Transform] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Append an element applied after the existing ones, merging adjacent affines.
    fn push(&mut self, t: Transform) {
        if let (Some(Transform::Affine(last)), Transform::Affine(next)) = (self.elements.last(), &t) {
            let merged = next.compose(last);
            *self.elements.last_mut().expect("non-empty") = Transform::Affine(merged);
        } else {
            self.elements.push(t);
        }
    }

    #[inline]
    pub fn apply(&self, p: Point) -> Point {
        self.elements.iter().fold(p, |q, t| t.apply(q))
    }

    /// Map a point back through the chain (affines inverted exactly, fields
    /// by fixed-point iteration).
    pub fn apply_inverse(&self, p: Point) -> Result<Point> {
        self.elements.iter().rev().try_fold(p, |q, t| t.apply_inverse(q))
    }

    /// The chain as a single affine, when it contains no fields.
    pub fn as_affine(&self) -> Option<Affine> {
        match self.elements.as_slice() {
            [] => Some(Affine::identity(self.dim)),
            [Transform::Affine(a)] => Some(*a),
            _ => None,
        }
    }

    /// Inverse chain with every element inverted on its own grid.
    pub fn inverse(&self) -> Result<TransformChain> {
        let mut out = TransformChain::identity(self.dim);
        for t in self.elements.iter().rev() {
            out.push(match t {
                Transform::Affine(a) => Transform::Affine(invert_affine(a)?),
                Transform::Field(f) => Transform::Field(Arc::new(f.inverse())),
            });
        }
        Ok(out)
    }
}

/// `a ∘ b`: points go through `b` first, then `a`.
pub fn compose(a: &TransformChain, b: &TransformChain) -> Result<TransformChain> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch(format!(
            "cannot compose {}D and {}D chains",
            a.dim, b.dim
        )));
    }
    let mut out = b.clone();
    for t in &a.elements {
        out.push(t.clone());
    }
    Ok(out)
}
