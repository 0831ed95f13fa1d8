//! Sparse light-field toolkit: plus-pattern light fields, 2D encodings,
//! differentiable single- and multi-view photometric warping, direct
//! estimation of metric relative pose and inverse depth, a synthetic
//! planar-scene renderer and trajectory/depth evaluation.

pub mod encodings;
pub mod error;
pub mod estimator;
pub mod eval;
pub mod geometry;
pub mod gradcheck;
pub mod image;
pub mod io;
pub mod lightfield;
pub mod losses;
pub mod synth;
pub mod warp;

pub use error::{Error, Result};
pub use geometry::{Intrinsics, RigidTransform, Twist};
pub use image::Image;
pub use lightfield::{plus_pattern, InverseDepthMap, SparseLightField, SubApertureLayout, ViewIndex};
