// SPDX-License-Identifier: Apache-2.0

//! Staircase state estimation over a split state space.
//!
//! Each stair is carried twice: as an infinite line in polar form (with the
//! elevations of both ends), which owns a covariance and is refined by an
//! extended Kalman filter, and as a pair of physical endpoints, which are
//! grown by span maximisation and re-projected onto the refined line. Shared
//! staircase parameters (height, depth, width, start/end yaw, curvature) are
//! derived from the state and drive a neighbour-based process model that can
//! predict stairs the sensor never saw.
//!
//! The crate is `no_std` (with `alloc`). File formats, the scenario runner
//! and the command-line interface live in the `stairwise` crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod association;
pub mod baseline;
pub mod error;
pub mod filter;
pub mod frames;
pub mod math;
pub mod metrics;
pub mod model;
pub mod predict;
pub mod segmentation;
pub mod sim;
pub mod tracker;

pub use nalgebra;
pub use association::{match_frame, AssociationConfig, MatchResult};
pub use baseline::{BaselineEstimate, BaselineKind};
pub use error::{Error, Result};
pub use filter::{filter_step, FilterConfig};
pub use frames::initialize_belief;
pub use model::{
    derive_params, detect_landing, MeasurementFrame, NoiseConfig, RobotPose, Stair,
    StairEndpoints, StairLine, StaircaseBelief, StaircaseParams,
};
pub use predict::Direction;
pub use segmentation::{segment_staircase, PointCloud, PointLabel, SegmentationConfig};
pub use tracker::StaircaseTracker;
