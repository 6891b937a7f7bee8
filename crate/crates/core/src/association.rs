// SPDX-License-Identifier: Apache-2.0

//! Frame-to-belief stair matching.
//!
//! Every measured line is taken to the world frame, where it is compared
//! with the belief lines under `(Sigma_i + Q_w)`. Matches are accepted
//! greedily by distance while keeping both index sequences increasing.
//! Leftover measurements that sit a whole number of stair heights beyond the
//! bottom or top of the flight, close to the model's extrapolation, become
//! new stairs.

use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{endpoints_to_world, init_line_covariance, line_to_world};
use crate::math::{self, dot2, unit, wrap};
use crate::model::{ascending_yaw, MeasurementFrame, Stair, StairLine, StaircaseBelief};
use crate::predict::{predict_chain, Direction};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssociationConfig {
    /// Squared Mahalanobis gate (4-dof chi-square at 3 sigma).
    pub gate: f64,
    /// How many stairs past either edge a new measurement may sit; the gap
    /// is filled by prediction.
    pub max_extrapolation: usize,
    /// Allowed elevation error against `k * h` for new stairs (m). Capped at
    /// `0.4 h` so neighbouring candidates stay distinguishable.
    pub new_stair_z_tolerance: f64,
    /// Allowed offset of a new stair's centre from the extrapolated line,
    /// as a fraction of the depth.
    pub new_stair_depth_fraction: f64,
    /// Allowed angle between a new stair and the extrapolated line (rad).
    pub new_stair_angle_tolerance: f64,
}

impl Default for AssociationConfig {
    fn default() -> Self {
        Self {
            gate: 16.25,
            max_extrapolation: 6,
            new_stair_z_tolerance: 0.06,
            new_stair_depth_fraction: 0.5,
            new_stair_angle_tolerance: math::to_radians(15.0),
        }
    }
}

/// A measurement admitted beyond the current flight, `offset` stairs past the
/// edge (1 = adjacent).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewStair {
    pub offset: usize,
    pub measurement: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// `(belief index, measurement index)`, ascending in both.
    pub matched: Vec<(usize, usize)>,
    pub new_preceding: Vec<NewStair>,
    pub new_succeeding: Vec<NewStair>,
    /// Measurements that were neither matched nor admitted.
    pub unmatched_measurements: Vec<usize>,
}

impl MatchResult {
    /// Number of stairs added below the flight (`u`).
    pub fn preceding_count(&self) -> usize {
        self.new_preceding.iter().map(|s| s.offset).max().unwrap_or(0)
    }

    /// Number of stairs added above the flight (`v`).
    pub fn succeeding_count(&self) -> usize {
        self.new_succeeding.iter().map(|s| s.offset).max().unwrap_or(0)
    }

    /// `(state index, measurement index)` after resizing an `n`-stair belief
    /// by `u` below and `v` above, sorted by state index.
    pub fn resized_pairs(&self, n: usize) -> Vec<(usize, usize)> {
        let u = self.preceding_count();
        let mut out: Vec<(usize, usize)> = self
            .new_preceding
            .iter()
            .map(|s| (u - s.offset, s.measurement))
            .chain(self.matched.iter().map(|&(i, m)| (u + i, m)))
            .chain(self.new_succeeding.iter().map(|s| (u + n - 1 + s.offset, s.measurement)))
            .collect();
        out.sort_unstable();
        out
    }
}

/// A measured stair with its endpoints oriented to the belief's convention.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PreparedMeasurement {
    /// Local line, `z_start`/`z_end` swapped when the endpoints were.
    pub local: StairLine,
    /// Local measurement covariance permuted alongside `local`.
    pub q_local: Matrix4<f64>,
    pub world: Stair,
    /// World-frame covariance of `world.line`.
    pub q_world: Matrix4<f64>,
}

/// Model ascending yaw of belief stair `i`.
pub(crate) fn model_yaw(belief: &StaircaseBelief, i: usize) -> f64 {
    let p = &belief.params;
    let n = belief.len();
    // interpolate between the two measured edge yaws so long curved flights
    // whose curvature estimate drifts still orient correctly
    if n < 2 {
        return p.start_yaw;
    }
    let t = i as f64 / (n - 1) as f64;
    wrap(p.start_yaw + t * wrap(p.end_yaw - p.start_yaw))
}

fn nearest_by_elevation(belief: &StaircaseBelief, z: f64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, s) in belief.stairs.iter().enumerate() {
        let d = (s.elevation() - z).abs();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

pub(crate) fn swap_z(m: &mut Matrix4<f64>) {
    m.swap_rows(2, 3);
    m.swap_columns(2, 3);
}

pub(crate) fn flip_r(m: &mut Matrix4<f64>) {
    for k in 0..4 {
        m[(0, k)] = -m[(0, k)];
        m[(k, 0)] = -m[(k, 0)];
    }
}

pub(crate) fn prepare_measurements(belief: &StaircaseBelief, frame: &MeasurementFrame) -> Vec<PreparedMeasurement> {
    let q = frame.noise.measurement_covariance();
    let pose_cov = frame.noise.pose_covariance_matrix();
    frame
        .lines
        .iter()
        .zip(&frame.endpoints)
        .map(|(line, ends)| {
            let mut local = *line;
            let mut q_local = q;
            let mut world = Stair::new(line_to_world(line, &frame.pose), endpoints_to_world(ends, &frame.pose));
            let reference = model_yaw(belief, nearest_by_elevation(belief, world.elevation()));
            let yaw = ascending_yaw(&world.line, unit(reference));
            let left = unit(yaw + FRAC_PI_2);
            let e = &world.endpoints;
            let along = dot2([e.end[0] - e.start[0], e.end[1] - e.start[1]], left);
            if along < 0.0 {
                world.endpoints = world.endpoints.swapped();
                core::mem::swap(&mut world.line.z_start, &mut world.line.z_end);
                core::mem::swap(&mut local.z_start, &mut local.z_end);
                swap_z(&mut q_local);
            }
            let q_world = init_line_covariance(&local, &frame.pose, &q_local, &pose_cov);
            PreparedMeasurement { local, q_local, world, q_world }
        })
        .collect()
}

/// Residual `measurement - state` with the measurement expressed on the
/// state's side of the origin, and the matching sign of the r-component.
pub(crate) fn line_residual(measured: &StairLine, state: &StairLine) -> ([f64; 4], f64) {
    let (m, sign) = measured.aligned_to(state.phi);
    (
        [m.r - state.r, wrap(m.phi - state.phi), m.z_start - state.z_start, m.z_end - state.z_end],
        sign,
    )
}

/// Squared Mahalanobis distance between a prepared measurement and belief
/// stair `i`.
pub(crate) fn mahalanobis_sq(belief: &StaircaseBelief, i: usize, m: &PreparedMeasurement) -> Result<f64> {
    let (d, sign) = line_residual(&m.world.line, &belief.stairs[i].line);
    let mut qw = m.q_world;
    if sign < 0.0 {
        flip_r(&mut qw);
    }
    let s = belief.line_covariance(i) + qw;
    let chol = nalgebra::Cholesky::new(0.5 * (s + s.transpose())).ok_or(Error::SingularCovariance(i))?;
    let v = nalgebra::Vector4::from(d);
    Ok(v.dot(&chol.solve(&v)))
}

pub fn match_frame(belief: &StaircaseBelief, frame: &MeasurementFrame) -> Result<MatchResult> {
    match_frame_with(belief, frame, &AssociationConfig::default())
}

pub fn match_frame_with(
    belief: &StaircaseBelief,
    frame: &MeasurementFrame,
    config: &AssociationConfig,
) -> Result<MatchResult> {
    let prepared = prepare_measurements(belief, frame);
    match_prepared(belief, &prepared, config)
}

pub(crate) fn match_prepared(
    belief: &StaircaseBelief,
    prepared: &[PreparedMeasurement],
    config: &AssociationConfig,
) -> Result<MatchResult> {
    let n = belief.len();
    let mut rank: Vec<usize> = (0..prepared.len()).collect();
    rank.sort_by(|&a, &b| prepared[a].world.elevation().total_cmp(&prepared[b].world.elevation()).then(a.cmp(&b)));
    // position of each measurement in elevation order
    let mut order = alloc::vec![0usize; prepared.len()];
    for (pos, &m) in rank.iter().enumerate() {
        order[m] = pos;
    }

    let mut candidates = Vec::new();
    for (m, pm) in prepared.iter().enumerate() {
        for i in 0..n {
            let d2 = mahalanobis_sq(belief, i, pm)?;
            if d2 <= config.gate {
                candidates.push((d2, i, m));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut used_state = alloc::vec![false; n];
    let mut used_meas = alloc::vec![false; prepared.len()];
    let mut matched: Vec<(usize, usize)> = Vec::new();
    for &(_, i, m) in &candidates {
        if used_state[i] || used_meas[m] {
            continue;
        }
        let crosses = matched
            .iter()
            .any(|&(i2, m2)| (i < i2) != (order[m] < order[m2]));
        if crosses {
            continue;
        }
        used_state[i] = true;
        used_meas[m] = true;
        matched.push((i, m));
    }
    matched.sort_unstable();

    let mut result = MatchResult { matched, ..MatchResult::default() };
    let leftovers: Vec<usize> = (0..prepared.len()).filter(|&m| !used_meas[m]).collect();
    admit_new_stairs(belief, prepared, &leftovers, config, &mut result);
    Ok(result)
}

fn admit_new_stairs(
    belief: &StaircaseBelief,
    prepared: &[PreparedMeasurement],
    leftovers: &[usize],
    config: &AssociationConfig,
    result: &mut MatchResult,
) {
    let n = belief.len();
    let p = &belief.params;
    let h = p.height;
    let z_tol = config.new_stair_z_tolerance.min(0.4 * h);
    let reach = config.max_extrapolation;
    let bottom = &belief.stairs[0];
    let top = &belief.stairs[n - 1];
    let below = predict_chain(bottom, p, Direction::Previous, reach, n);
    let above = predict_chain(top, p, Direction::Next, reach, n);

    // best candidate per (side, offset)
    let mut best_below: Vec<Option<(f64, usize)>> = alloc::vec![None; reach + 1];
    let mut best_above: Vec<Option<(f64, usize)>> = alloc::vec![None; reach + 1];
    let mut claimed = alloc::vec![false; prepared.len()];
    for &m in leftovers {
        let w = &prepared[m].world;
        let z = w.elevation();
        let (edge, chain, slots) = if z < bottom.elevation() {
            (bottom, &below, &mut best_below)
        } else if z > top.elevation() {
            (top, &above, &mut best_above)
        } else {
            continue;
        };
        let dz = (z - edge.elevation()).abs();
        let k = math::round(dz / h) as usize;
        if k == 0 || k > reach || (dz - k as f64 * h).abs() > z_tol {
            continue;
        }
        let expected = &chain[k - 1];
        let c = w.endpoints.center_xy();
        let offset = expected.line.signed_distance_xy(&[c[0], c[1], 0.0]);
        let (aligned, _) = w.line.aligned_to(expected.line.phi);
        let angle = wrap(aligned.phi - expected.line.phi).abs();
        // the measured line's own spread at its centre, which grows with the
        // distance from the foot of its normal
        let q = &prepared[m].q_world;
        let t = dot2(c, unit(w.line.phi + FRAC_PI_2));
        let spread = (q[(0, 0)] - 2.0 * t * q[(0, 1)] + t * t * q[(1, 1)]).max(0.0);
        let offset_tol = math::hypot(config.new_stair_depth_fraction * p.depth, 3.0 * math::sqrt(spread));
        if offset.abs() > offset_tol || angle > config.new_stair_angle_tolerance {
            continue;
        }
        let score = offset.abs() / p.depth + angle;
        if slots[k].is_none_or(|(s, _)| score < s) {
            slots[k] = Some((score, m));
        }
    }
    for (k, slot) in best_below.iter().enumerate() {
        if let Some((_, m)) = slot {
            claimed[*m] = true;
            result.new_preceding.push(NewStair { offset: k, measurement: *m });
        }
    }
    for (k, slot) in best_above.iter().enumerate() {
        if let Some((_, m)) = slot {
            claimed[*m] = true;
            result.new_succeeding.push(NewStair { offset: k, measurement: *m });
        }
    }
    result.unmatched_measurements = leftovers.iter().copied().filter(|&m| !claimed[m]).collect();
}
