//! Metric scale recovery and drift reduction for monocular visual odometry
//! using distance measurements to a single fixed radio anchor.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled. File formats and the command-line driver live in the companion
//! `monorange` crate.
//!
//! Processing order:
//! 1. [`scale::accumulate_duplets`] solves the per-range scale quadratic
//!    against the up-to-scale VO trajectory.
//! 2. [`scale::select_scale`] keeps the root branch with the smallest spread.
//! 3. [`graph::FactorGraph::apply_scale`] brings poses and points to metric
//!    units, and [`optimizer::optimize`] refines everything jointly over
//!    re-projection and range residuals.
//!
//! [`sim`] produces synthetic worlds with ground truth for every step.

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod eval;
pub mod geometry;
pub mod graph;
pub mod optimizer;
pub mod pipeline;
pub mod ranging;
pub mod scale;
pub mod sim;
pub mod text;
pub mod trajectory;

pub use geometry::{CameraIntrinsics, Pose, Rotation};
pub use graph::{FactorGraph, VariableId};
pub use optimizer::{LmConfig, LmReport};
pub use ranging::{RangeMeasurement, RangingExtrinsics};
pub use scale::{ScaleDuplet, ScaleEstimate};
pub use trajectory::StampedPose;
