//! Spatial transforms in physical micrometres: affines, dense displacement
//! fields, ordered chains of both, and backward warping.

mod affine;
mod chain;
mod field;
pub mod io;
mod warp;

pub use affine::{invert_affine, Affine};
pub use chain::{compose, Transform, TransformChain};
pub use field::{jacobian_min_det, DisplacementField, INVERSE_ITERATIONS, INVERSE_TOLERANCE_VOXELS};
pub use warp::{warp_image, warp_mask};

pub(crate) use field::jacobian_min_det_raw;
pub(crate) use field::Vec3;
pub(crate) use warp::warp_values;
