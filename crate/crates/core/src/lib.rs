//! Motion segmentation of feature trajectories.
//!
//! The pipeline groups trajectories into small locally-affine atoms, splits
//! the atom graph into fine motion models with a min-cost multicut, merges
//! fine models into coarse motions through epipolar voting and spectral
//! clustering, and finally refines per-feature labels by randomized voting.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod atoms;
pub mod dataio;
pub mod error;
pub mod fine2coarse;
pub mod geometry;
pub mod multicut;
pub mod numerics;
pub mod pipeline;
pub mod rv;
pub mod seed;
pub mod trajectory;

pub use error::{Error, Result};
pub use trajectory::TrajectorySet;
