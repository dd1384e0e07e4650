//! Certifiable anisotropic rotation averaging.
//!
//! Absolute orientations are estimated from relative rotations `R̃ᵢⱼ ≈ Rᵢ Rⱼᵀ`
//! and their two-view Hessians by solving a semidefinite relaxation whose
//! off-diagonal Gram blocks are confined to the convex hull of SO(3).

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod aniso;
pub mod bench;
pub mod error;
pub mod eval;
pub mod io;
pub mod pipeline;
pub mod rounding;
pub mod sdp;
pub mod so3;
pub mod solver;
pub mod spectral;
pub mod synth;

#[cfg(test)]
mod proptests;

pub use error::{Error, Result};
