// SPDX-License-Identifier: Apache-2.0

//! State, parameter and measurement types, plus derivation of the shared
//! staircase parameters from a state.
//!
//! Conventions used everywhere in the crate:
//!
//! * stairs are ordered bottom to top (ascending mean edge elevation);
//! * a line `(r, phi)` is the set `x cos(phi) + y sin(phi) = r` with `r >= 0`
//!   and `phi` in `(-pi, pi]`;
//! * the *start* endpoint of a stair sits on the right-hand side when facing
//!   up the staircase, the *end* endpoint on the left.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, Matrix4, Matrix6, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, dot2, unit, wrap};

/// One stair edge as an infinite line in polar form plus the elevations of
/// its two ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StairLine {
    pub r: f64,
    pub phi: f64,
    pub z_start: f64,
    pub z_end: f64,
}

impl StairLine {
    /// Builds a line and brings it into the `r >= 0` convention.
    pub fn new(r: f64, phi: f64, z_start: f64, z_end: f64) -> Self {
        Self { r, phi, z_start, z_end }.normalized().0
    }

    /// Returns the line in the `r >= 0`, wrapped-angle convention and whether
    /// the polar pair had to be flipped to get there.
    pub fn normalized(self) -> (Self, bool) {
        if self.r < 0.0 {
            (Self { r: -self.r, phi: wrap(self.phi + PI), ..self }, true)
        } else {
            (Self { phi: wrap(self.phi), ..self }, false)
        }
    }

    /// Same geometric line with the opposite normal: `(r, phi) -> (-r, phi + pi)`.
    pub fn flipped(self) -> Self {
        Self { r: -self.r, phi: wrap(self.phi + PI), ..self }
    }

    /// Expresses this line with a normal on the same side as `reference_phi`.
    /// The returned sign is `-1` when the polar pair was flipped.
    pub fn aligned_to(self, reference_phi: f64) -> (Self, f64) {
        if wrap(self.phi - reference_phi).abs() > FRAC_PI_2 {
            (self.flipped(), -1.0)
        } else {
            (self, 1.0)
        }
    }

    pub fn normal(&self) -> [f64; 2] {
        unit(self.phi)
    }

    /// Unit vector along the line (normal rotated by +90 degrees).
    pub fn direction(&self) -> [f64; 2] {
        let n = self.normal();
        [-n[1], n[0]]
    }

    pub fn mean_z(&self) -> f64 {
        0.5 * (self.z_start + self.z_end)
    }

    /// Signed XY offset of a point from the line along its normal.
    pub fn signed_distance_xy(&self, p: &[f64; 3]) -> f64 {
        dot2(self.normal(), [p[0], p[1]]) - self.r
    }

    /// Orthogonal projection of a point's XY onto the line.
    pub fn project_xy(&self, p: &[f64; 3]) -> [f64; 2] {
        let n = self.normal();
        let off = self.signed_distance_xy(p);
        [p[0] - off * n[0], p[1] - off * n[1]]
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.r, self.phi, self.z_start, self.z_end)
    }

    /// Raw conversion; callers normalise when they need the convention.
    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self { r: v[0], phi: v[1], z_start: v[2], z_end: v[3] }
    }

    /// Line through two points (their XY), with the points' elevations.
    pub fn through(start: &[f64; 3], end: &[f64; 3]) -> Result<Self> {
        let dx = end[0] - start[0];
        let dy = end[1] - start[1];
        let len = math::hypot(dx, dy);
        if len < 1e-9 {
            return Err(Error::DegenerateStaircase("coincident endpoints"));
        }
        // normal = direction rotated by -90 degrees, so direction() points start -> end
        let phi = math::atan2(-dx, dy);
        let n = unit(phi);
        let r = n[0] * start[0] + n[1] * start[1];
        Ok(Self::new(r, phi, start[2], end[2]))
    }
}

/// Physical start and end points of one stair edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StairEndpoints {
    pub start: [f64; 3],
    pub end: [f64; 3],
}

impl StairEndpoints {
    pub fn new(start: [f64; 3], end: [f64; 3]) -> Self {
        Self { start, end }
    }

    pub fn center_xy(&self) -> [f64; 2] {
        [0.5 * (self.start[0] + self.end[0]), 0.5 * (self.start[1] + self.end[1])]
    }

    pub fn span_xy(&self) -> f64 {
        math::dist_xy(&self.start, &self.end)
    }

    pub fn mean_z(&self) -> f64 {
        0.5 * (self.start[2] + self.end[2])
    }

    pub fn swapped(self) -> Self {
        Self { start: self.end, end: self.start }
    }

    /// Snaps both points onto `line` (XY orthogonal projection, z from the line).
    pub fn reprojected(&self, line: &StairLine) -> Self {
        let s = line.project_xy(&self.start);
        let e = line.project_xy(&self.end);
        Self { start: [s[0], s[1], line.z_start], end: [e[0], e[1], line.z_end] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stair {
    pub line: StairLine,
    pub endpoints: StairEndpoints,
}

impl Stair {
    pub fn new(line: StairLine, endpoints: StairEndpoints) -> Self {
        Self { line, endpoints }
    }

    /// Stair whose line is fitted through its endpoints.
    pub fn from_endpoints(endpoints: StairEndpoints) -> Result<Self> {
        Ok(Self { line: StairLine::through(&endpoints.start, &endpoints.end)?, endpoints })
    }

    /// Elevation used for ordering.
    pub fn elevation(&self) -> f64 {
        self.line.mean_z()
    }
}

/// Shared geometry of one flight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaircaseParams {
    pub height: f64,
    pub depth: f64,
    pub width: f64,
    pub start_yaw: f64,
    pub end_yaw: f64,
    pub curvature: f64,
}

impl StaircaseParams {
    pub const DIM: usize = 6;
    // column order of the parameter Jacobian
    pub const HEIGHT: usize = 0;
    pub const DEPTH: usize = 1;
    pub const WIDTH: usize = 2;
    pub const START_YAW: usize = 3;
    pub const END_YAW: usize = 4;
    pub const CURVATURE: usize = 5;

    pub fn to_array(&self) -> [f64; 6] {
        [self.height, self.depth, self.width, self.start_yaw, self.end_yaw, self.curvature]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            height: a[0],
            depth: a[1],
            width: a[2],
            start_yaw: a[3],
            end_yaw: a[4],
            curvature: a[5],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.to_array().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("staircase parameters"));
        }
        if self.height <= 0.0 || self.depth <= 0.0 || self.width <= 0.0 {
            return Err(Error::DegenerateStaircase("non-positive height, depth or width"));
        }
        Ok(())
    }
}

/// Per-component detector noise (the diagonal of Q).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeasurementSigmas {
    pub r: f64,
    pub phi: f64,
    pub z_start: f64,
    pub z_end: f64,
}

/// Per-parameter process noise (the diagonal of R).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParameterSigmas {
    pub height: f64,
    pub depth: f64,
    pub width: f64,
    pub start_yaw: f64,
    pub end_yaw: f64,
    pub curvature: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub measurement: MeasurementSigmas,
    pub parameters: ParameterSigmas,
    /// Covariance over `(x_r, y_r, z_r, theta_r)`.
    pub pose_covariance: [[f64; 4]; 4],
}

impl Default for NoiseConfig {
    fn default() -> Self {
        let deg = math::to_radians(1.0);
        let half_deg = 0.5 * deg;
        let mut pose = [[0.0; 4]; 4];
        pose[0][0] = 0.01 * 0.01;
        pose[1][1] = 0.01 * 0.01;
        pose[2][2] = 0.01 * 0.01;
        pose[3][3] = half_deg * half_deg;
        Self {
            measurement: MeasurementSigmas { r: 0.03, phi: 2.0 * deg, z_start: 0.02, z_end: 0.02 },
            parameters: ParameterSigmas {
                height: 0.01,
                depth: 0.01,
                width: 0.05,
                start_yaw: deg,
                end_yaw: deg,
                curvature: half_deg,
            },
            pose_covariance: pose,
        }
    }
}

impl Default for MeasurementSigmas {
    fn default() -> Self {
        NoiseConfig::default().measurement
    }
}

impl Default for ParameterSigmas {
    fn default() -> Self {
        NoiseConfig::default().parameters
    }
}

impl NoiseConfig {
    /// Scales every sigma by `k` (covariances by `k^2`).
    pub fn scaled(&self, k: f64) -> Self {
        let m = &self.measurement;
        let p = &self.parameters;
        let mut pose = self.pose_covariance;
        for row in pose.iter_mut() {
            for v in row.iter_mut() {
                *v *= k * k;
            }
        }
        Self {
            measurement: MeasurementSigmas { r: k * m.r, phi: k * m.phi, z_start: k * m.z_start, z_end: k * m.z_end },
            parameters: ParameterSigmas {
                height: k * p.height,
                depth: k * p.depth,
                width: k * p.width,
                start_yaw: k * p.start_yaw,
                end_yaw: k * p.end_yaw,
                curvature: k * p.curvature,
            },
            pose_covariance: pose,
        }
    }

    /// Every sigma set to `sigma` and a zero pose covariance.
    pub fn uniform(sigma: f64) -> Self {
        Self {
            measurement: MeasurementSigmas { r: sigma, phi: sigma, z_start: sigma, z_end: sigma },
            parameters: ParameterSigmas {
                height: sigma,
                depth: sigma,
                width: sigma,
                start_yaw: sigma,
                end_yaw: sigma,
                curvature: sigma,
            },
            pose_covariance: [[0.0; 4]; 4],
        }
    }

    pub fn measurement_covariance(&self) -> Matrix4<f64> {
        let m = &self.measurement;
        Matrix4::from_diagonal(&Vector4::new(m.r * m.r, m.phi * m.phi, m.z_start * m.z_start, m.z_end * m.z_end))
    }

    pub fn parameter_covariance(&self) -> Matrix6<f64> {
        let p = &self.parameters;
        let s = [p.height, p.depth, p.width, p.start_yaw, p.end_yaw, p.curvature];
        Matrix6::from_fn(|i, j| if i == j { s[i] * s[i] } else { 0.0 })
    }

    pub fn pose_covariance_matrix(&self) -> Matrix4<f64> {
        Matrix4::from_fn(|i, j| self.pose_covariance[i][j])
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.measurement;
        let p = &self.parameters;
        let sigmas = [
            m.r, m.phi, m.z_start, m.z_end, p.height, p.depth, p.width, p.start_yaw, p.end_yaw,
            p.curvature,
        ];
        if sigmas.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::NonFinite("noise sigmas must be finite and non-negative"));
        }
        let pose = self.pose_covariance_matrix();
        if (pose - pose.transpose()).abs().max() > 1e-12 {
            return Err(Error::NonFinite("pose covariance must be symmetric"));
        }
        if pose.symmetric_eigenvalues().min() < -1e-12 {
            return Err(Error::NonFinite("pose covariance must be positive semidefinite"));
        }
        Ok(())
    }
}

/// Gravity-aligned robot pose: position and yaw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotPose {
    pub position: [f64; 3],
    pub yaw: f64,
}

impl RobotPose {
    pub fn new(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Self { position: [x, y, z], yaw: wrap(yaw) }
    }

    pub fn identity() -> Self {
        Self { position: [0.0; 3], yaw: 0.0 }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.position[0], self.position[1], self.position[2], self.yaw]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }
}

/// One detector output, expressed in the robot's local frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementFrame {
    pub lines: Vec<StairLine>,
    pub endpoints: Vec<StairEndpoints>,
    pub pose: RobotPose,
    pub noise: NoiseConfig,
    pub timestamp: f64,
}

impl MeasurementFrame {
    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lines.len() != self.endpoints.len() {
            return Err(Error::InvalidScenario("frame lines and endpoints differ in length"));
        }
        Ok(())
    }

    /// Frame restricted to the given measurement indices (kept in order).
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            lines: indices.iter().map(|&i| self.lines[i]).collect(),
            endpoints: indices.iter().map(|&i| self.endpoints[i]).collect(),
            pose: self.pose,
            noise: self.noise,
            timestamp: self.timestamp,
        }
    }
}

/// Belief over one flight: ordered stairs, the 4N x 4N line covariance and
/// the derived parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct StaircaseBelief {
    pub stairs: Vec<Stair>,
    pub covariance: DMatrix<f64>,
    pub params: StaircaseParams,
    pub frame_id: String,
}

impl StaircaseBelief {
    pub fn len(&self) -> usize {
        self.stairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stairs.is_empty()
    }

    pub fn lines(&self) -> impl Iterator<Item = &StairLine> + '_ {
        self.stairs.iter().map(|s| &s.line)
    }

    /// 4x4 covariance block of stair `i`.
    pub fn line_covariance(&self, i: usize) -> Matrix4<f64> {
        self.covariance.fixed_view::<4, 4>(4 * i, 4 * i).into_owned()
    }

    /// Re-derives `params` from the current stairs.
    pub fn refresh_params(&mut self) -> Result<()> {
        self.params = derive_params(&self.stairs)?;
        Ok(())
    }

    /// Splits the belief after each listed stair count. Pieces with fewer
    /// than two stairs are dropped since they carry no parameters.
    pub fn split_at(&self, splits: &[usize]) -> Vec<StaircaseBelief> {
        let mut bounds = Vec::with_capacity(splits.len() + 2);
        bounds.push(0);
        bounds.extend(splits.iter().copied().filter(|&s| s > 0 && s < self.len()));
        bounds.push(self.len());
        bounds.dedup();
        let mut out = Vec::new();
        for w in bounds.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b - a < 2 {
                continue;
            }
            let stairs = self.stairs[a..b].to_vec();
            let Ok(params) = derive_params(&stairs) else { continue };
            let covariance = self.covariance.view((4 * a, 4 * a), (4 * (b - a), 4 * (b - a))).into_owned();
            out.push(StaircaseBelief { stairs, covariance, params, frame_id: self.frame_id.clone() });
        }
        out
    }
}

/// Depth between consecutive stairs, measured between their edge centres
/// along the bisector of the two stairs' ascending yaws. Returns the per-step
/// depths and the per-stair ascending yaws.
pub(crate) fn step_geometry(stairs: &[Stair]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = stairs.len();
    if n < 2 {
        return Err(Error::DegenerateStaircase("fewer than two stairs"));
    }
    let centers: Vec<[f64; 2]> = stairs.iter().map(|s| s.endpoints.center_xy()).collect();
    let mut steps = Vec::with_capacity(n - 1);
    for w in centers.windows(2) {
        let v = [w[1][0] - w[0][0], w[1][1] - w[0][1]];
        if math::hypot(v[0], v[1]) < 1e-6 {
            return Err(Error::DegenerateStaircase("consecutive stair centres coincide"));
        }
        steps.push(v);
    }
    let yaws = ascending_yaws(stairs, &centers);
    let depths = (0..n - 1)
        .map(|i| {
            let bisector = yaws[i] + 0.5 * wrap(yaws[i + 1] - yaws[i]);
            dot2(steps[i], unit(bisector))
        })
        .collect();
    Ok((depths, yaws))
}

/// Stairs looked at when picking the ascending side of the first line.
const LEAD_STEPS: usize = 3;

/// Ascending yaw of every stair. The first one faces the centre a few stairs
/// up, each later one is the normal closest to its predecessor. A single
/// centre-to-centre vector is not enough: partial edges shift centres
/// sideways and far lines carry large normal errors, either of which can
/// flip the side of one stair.
pub(crate) fn ascending_yaws(stairs: &[Stair], centers: &[[f64; 2]]) -> Vec<f64> {
    let n = stairs.len();
    if n < 2 {
        return stairs.iter().map(|s| s.line.phi).collect();
    }
    let lead = centers[LEAD_STEPS.min(n - 1)];
    let mut prev = ascending_yaw(&stairs[0].line, [lead[0] - centers[0][0], lead[1] - centers[0][1]]);
    let mut out = Vec::with_capacity(n);
    out.push(prev);
    for s in &stairs[1..] {
        prev = ascending_yaw(&s.line, unit(prev));
        out.push(prev);
    }
    out
}

/// The line normal (`phi` or `phi + pi`) that points along `toward`.
pub(crate) fn ascending_yaw(line: &StairLine, toward: [f64; 2]) -> f64 {
    if dot2(line.normal(), toward) >= 0.0 {
        line.phi
    } else {
        wrap(line.phi + PI)
    }
}

/// Derives the six shared parameters by averaging over the individual steps.
pub fn derive_params(stairs: &[Stair]) -> Result<StaircaseParams> {
    let (depths, yaws) = step_geometry(stairs)?;
    let n = stairs.len();
    let steps = (n - 1) as f64;
    let height = (stairs[n - 1].elevation() - stairs[0].elevation()) / steps;
    let depth = depths.iter().sum::<f64>() / steps;
    let width = stairs.iter().map(|s| s.endpoints.span_xy()).sum::<f64>() / n as f64;
    let curvature = yaws.windows(2).map(|w| wrap(w[1] - w[0])).sum::<f64>() / steps;
    let params = StaircaseParams {
        height,
        depth,
        width,
        start_yaw: yaws[0],
        end_yaw: yaws[n - 1],
        curvature,
    };
    params.validate()?;
    Ok(params)
}

/// Indices after which the flight should be split because the step depth
/// jumps well above the typical depth. `kappa` scales the median depth and
/// `floor` is an absolute minimum landing depth in metres.
pub fn detect_landing(stairs: &[Stair], kappa: f64, floor: f64) -> Vec<usize> {
    if stairs.len() < 3 {
        return Vec::new();
    }
    let Ok((depths, _)) = step_geometry(stairs) else { return Vec::new() };
    let mut sorted = depths.clone();
    let threshold = (kappa * math::median(&mut sorted)).max(floor);
    depths
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > threshold)
        .map(|(i, _)| i + 1)
        .collect()
}
