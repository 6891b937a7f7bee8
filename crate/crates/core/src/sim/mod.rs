// SPDX-License-Identifier: Apache-2.0

//! Deterministic scenario simulator: ground-truth staircases, detector-like
//! measurement frames and labelled point clouds.

mod cloud;
mod render;

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{unit, wrap};
use crate::model::{MeasurementFrame, NoiseConfig, RobotPose, Stair, StairEndpoints, StaircaseParams};
use crate::segmentation::PointCloud;

pub use cloud::render_cloud;
pub use render::{render_frame, segment_hits_box, Obstacles};

pub const SCHEMA_VERSION: u32 = 1;

/// A flat platform inserted after `after` stairs, `length` metres long.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landing {
    pub after: usize,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaircaseSpec {
    pub steps: usize,
    pub height: f64,
    pub depth: f64,
    pub width: f64,
    /// Ascending yaw of the first stair.
    pub start_yaw: f64,
    /// Yaw change per step (rad), positive turning left going up.
    pub curvature: f64,
    /// Centre of the first stair edge at ground level.
    pub origin: [f64; 3],
    #[serde(default)]
    pub landings: Vec<Landing>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldOfView {
    /// Sensing radius (m); unbounded ranges are stored as `null`.
    #[serde(with = "range_serde", default = "unbounded")]
    pub max_range: f64,
    /// Half of the horizontal opening angle: at most 90 degrees, or 180
    /// degrees for an all-round sensor.
    pub half_angle: f64,
    /// Sensor height above the pose position (m).
    #[serde(default)]
    pub sensor_height: f64,
}

fn unbounded() -> f64 {
    f64::INFINITY
}

mod range_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl FieldOfView {
    pub fn unlimited() -> Self {
        Self { max_range: f64::INFINITY, half_angle: FRAC_PI_2, sensor_height: 0.0 }
    }

    /// All-round sensor such as a spinning lidar.
    pub fn omnidirectional(max_range: f64, sensor_height: f64) -> Self {
        Self { max_range, half_angle: PI, sensor_height }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct View {
    pub pose: RobotPose,
    pub fov: FieldOfView,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum ClutterShape {
    Box { size: [f64; 3] },
    Cylinder { radius: f64, height: f64 },
}

/// An object standing on a tread. `along` is measured from the edge centre
/// along the edge (towards the end endpoint), `into` from the edge up the
/// flight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Clutter {
    #[serde(flatten)]
    pub shape: ClutterShape,
    pub stair: usize,
    pub along: f64,
    pub into: f64,
    #[serde(default)]
    pub yaw: f64,
}

/// An opaque box that blocks lines of sight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Occluder {
    pub center: [f64; 3],
    pub half_extents: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorSpec {
    /// Along-line jitter of each detected endpoint (m).
    pub endpoint_sigma: f64,
    /// Probability per frame of one spurious line.
    pub false_line_rate: f64,
    /// Shortest visible edge piece that is reported (m).
    pub min_visible_length: f64,
    /// Fraction of sampled edge points that must be unblocked.
    pub visibility_threshold: f64,
    /// Probability that a visible clutter object's front top edge is
    /// reported as a stair line in a frame.
    pub clutter_edge_rate: f64,
}

impl Default for DetectorSpec {
    fn default() -> Self {
        Self { endpoint_sigma: 0.02, false_line_rate: 0.0, min_visible_length: 0.3, visibility_threshold: 0.6, clutter_edge_rate: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub schema_version: u32,
    pub name: String,
    pub staircase: StaircaseSpec,
    pub trajectory: Vec<View>,
    pub noise: NoiseConfig,
    #[serde(default)]
    pub detector: DetectorSpec,
    #[serde(default)]
    pub clutter: Vec<Clutter>,
    #[serde(default)]
    pub occluders: Vec<Occluder>,
    /// Surface sampling density of the point cloud (points per m^2).
    pub point_density: f64,
    /// Gaussian noise on every cloud point (m).
    #[serde(default = "default_cloud_noise")]
    pub cloud_noise: f64,
    pub seed: u64,
}

fn default_cloud_noise() -> f64 {
    0.005
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidScenario("unsupported schema version"));
        }
        let s = &self.staircase;
        if s.steps < 2 {
            return Err(Error::InvalidScenario("a staircase needs at least two steps"));
        }
        let dims = [s.height, s.depth, s.width];
        if dims.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::InvalidScenario("height, depth and width must be positive"));
        }
        if !s.start_yaw.is_finite() || !s.curvature.is_finite() || s.origin.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidScenario("non-finite staircase geometry"));
        }
        // the inner edge of a curved flight must not fold over itself
        if s.curvature != 0.0 && s.depth - s.width * libm::sin(0.5 * s.curvature.abs()) <= 0.0 {
            return Err(Error::InvalidScenario("curvature too tight for the width"));
        }
        for l in &s.landings {
            if l.after == 0 || l.after >= s.steps || !(l.length > 0.0) {
                return Err(Error::InvalidScenario("landing must sit between two stairs"));
            }
        }
        for v in &self.trajectory {
            let a = v.fov.half_angle;
            let wedge = a > 0.0 && a <= FRAC_PI_2 + 1e-12;
            if !(wedge || (PI..=PI + 1e-12).contains(&a)) || !(v.fov.max_range > 0.0) {
                return Err(Error::InvalidScenario("field of view needs a positive range and a half-angle up to 90 deg or of 180 deg"));
            }
        }
        for c in &self.clutter {
            if c.stair >= s.steps {
                return Err(Error::InvalidScenario("clutter placed on a missing stair"));
            }
        }
        if !(self.point_density >= 0.0) || !(self.cloud_noise >= 0.0) {
            return Err(Error::InvalidScenario("point density and cloud noise must be non-negative"));
        }
        let d = &self.detector;
        if !(d.endpoint_sigma >= 0.0) || !(0.0..=1.0).contains(&d.false_line_rate) || !(0.0..=1.0).contains(&d.clutter_edge_rate) || !(0.0..=1.0).contains(&d.visibility_threshold) {
            return Err(Error::InvalidScenario("detector settings out of range"));
        }
        self.noise.validate().map_err(|_| Error::InvalidScenario("noise configuration"))
    }

    /// Whether the staircase lies in the usual envelope of 4 to 20 steps and
    /// 1 to 10 m width.
    pub fn in_default_envelope(&self) -> bool {
        let s = &self.staircase;
        (4..=20).contains(&s.steps) && (1.0..=10.0).contains(&s.width)
    }
}

/// True geometry. `flights` holds `[start, end)` stair ranges split at
/// landings; `params` describes every flight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueStaircase {
    pub stairs: Vec<Stair>,
    pub params: StaircaseParams,
    pub flights: Vec<(usize, usize)>,
}

impl TrueStaircase {
    /// Ascending yaw of stair `i`.
    pub fn yaw(&self, i: usize) -> f64 {
        wrap(self.params.start_yaw + i as f64 * self.params.curvature)
    }

    pub fn flight_params(&self, flight: usize) -> StaircaseParams {
        let (a, b) = self.flights[flight];
        StaircaseParams {
            start_yaw: self.yaw(a),
            end_yaw: self.yaw(b - 1),
            ..self.params
        }
    }
}

/// Builds the staircase: stair `i` has ascending yaw `start_yaw + i * dpsi`,
/// its edge at elevation `(i + 1) h` above the origin, and consecutive edge
/// centres one chord `d` apart along the bisector of their yaws.
pub fn build_staircase(spec: &StaircaseSpec) -> Result<TrueStaircase> {
    if spec.steps < 2 || !(spec.height > 0.0 && spec.depth > 0.0 && spec.width > 0.0) {
        return Err(Error::InvalidScenario("staircase dimensions"));
    }
    let mut c = [spec.origin[0], spec.origin[1]];
    let mut stairs = Vec::with_capacity(spec.steps);
    for i in 0..spec.steps {
        let yaw = spec.start_yaw + i as f64 * spec.curvature;
        if i > 0 {
            let step = unit(yaw - 0.5 * spec.curvature);
            let extra = spec.landings.iter().filter(|l| l.after == i).map(|l| l.length).sum::<f64>();
            let len = spec.depth + extra;
            c = [c[0] + len * step[0], c[1] + len * step[1]];
        }
        let z = spec.origin[2] + (i + 1) as f64 * spec.height;
        let t = unit(yaw + FRAC_PI_2);
        let hw = 0.5 * spec.width;
        let ends = StairEndpoints::new([c[0] - hw * t[0], c[1] - hw * t[1], z], [c[0] + hw * t[0], c[1] + hw * t[1], z]);
        stairs.push(Stair::from_endpoints(ends)?);
    }
    let mut cuts: Vec<usize> = spec.landings.iter().map(|l| l.after).collect();
    cuts.sort_unstable();
    cuts.dedup();
    let mut flights = Vec::new();
    let mut start = 0;
    for c in cuts.into_iter().chain(core::iter::once(spec.steps)) {
        flights.push((start, c));
        start = c;
    }
    let params = StaircaseParams {
        height: spec.height,
        depth: spec.depth,
        width: spec.width,
        start_yaw: wrap(spec.start_yaw),
        end_yaw: wrap(spec.start_yaw + (spec.steps - 1) as f64 * spec.curvature),
        curvature: spec.curvature,
    };
    Ok(TrueStaircase { stairs, params, flights })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub staircase: TrueStaircase,
    /// For each frame, the true stair of every emitted line (`None` for
    /// spurious lines).
    pub correspondences: Vec<Vec<Option<usize>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub truth: GroundTruth,
    pub frames: Vec<MeasurementFrame>,
    pub cloud: PointCloud,
}

/// Seeds derived from the scenario seed so that frames and the cloud do not
/// share a random stream.
pub(crate) fn stream(seed: u64, salt: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(salt);
    rng
}

/// Frames only (no cloud), for estimator runs.
pub fn simulate_frames(spec: &ScenarioSpec) -> Result<(TrueStaircase, Vec<MeasurementFrame>, Vec<Vec<Option<usize>>>)> {
    spec.validate()?;
    let truth = build_staircase(&spec.staircase)?;
    let mut frames = Vec::with_capacity(spec.trajectory.len());
    let mut corr = Vec::with_capacity(spec.trajectory.len());
    for (k, view) in spec.trajectory.iter().enumerate() {
        let mut rng = stream(spec.seed, 1 + k as u64);
        let (mut f, c) = render_frame(&truth, view, &spec.noise, &spec.detector, &Obstacles { occluders: &spec.occluders, clutter: &spec.clutter }, &mut rng);
        f.timestamp = k as f64;
        frames.push(f);
        corr.push(c);
    }
    Ok((truth, frames, corr))
}

pub fn simulate(spec: &ScenarioSpec) -> Result<Simulation> {
    let (staircase, frames, correspondences) = simulate_frames(spec)?;
    let mut rng = stream(spec.seed, 0);
    let cloud = render_cloud(&staircase, spec, &mut rng);
    Ok(Simulation { truth: GroundTruth { staircase, correspondences }, frames, cloud })
}
