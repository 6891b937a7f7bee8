// SPDX-License-Identifier: Apache-2.0

//! Local/world transforms for lines and endpoints, and belief initialisation.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, Matrix4};

use crate::error::{Error, Result};
use crate::math::{cos, sin_cos};
use crate::model::{
    ascending_yaws, derive_params, MeasurementFrame, RobotPose, Stair, StairEndpoints, StairLine,
    StaircaseBelief,
};

/// Local line to world line, `g(zeta, pose)`.
pub fn line_to_world(zeta: &StairLine, pose: &RobotPose) -> StairLine {
    line_to_world_with_jacobians(zeta, pose).0
}

/// World line plus `G_z = dg/dzeta` and `G_pose = dg/d(x, y, z, theta)`.
pub fn line_to_world_with_jacobians(
    zeta: &StairLine,
    pose: &RobotPose,
) -> (StairLine, Matrix4<f64>, Matrix4<f64>) {
    let [x, y, z] = pose.position;
    let a = zeta.phi + pose.yaw;
    let (sa, ca) = sin_cos(a);
    let raw = StairLine {
        r: zeta.r + x * ca + y * sa,
        phi: a,
        z_start: zeta.z_start + z,
        z_end: zeta.z_end + z,
    };
    let dr_da = -x * sa + y * ca;
    let mut gz = Matrix4::identity();
    gz[(0, 1)] = dr_da;
    #[rustfmt::skip]
    let mut gp = Matrix4::new(
        ca,  sa,  0.0, dr_da,
        0.0, 0.0, 0.0, 1.0,
        0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 1.0, 0.0,
    );
    let (out, flipped) = raw.normalized();
    if flipped {
        for c in 0..4 {
            gz[(0, c)] = -gz[(0, c)];
            gp[(0, c)] = -gp[(0, c)];
        }
    }
    (out, gz, gp)
}

/// World line to the robot's local frame, the measurement function.
pub fn line_to_local(xi: &StairLine, pose: &RobotPose) -> StairLine {
    line_to_local_with_jacobians(xi, pose).0
}

/// Local line plus `H = dh/dxi` and `H_pose = dh/d(x, y, z, theta)`.
pub fn line_to_local_with_jacobians(
    xi: &StairLine,
    pose: &RobotPose,
) -> (StairLine, Matrix4<f64>, Matrix4<f64>) {
    let [x, y, z] = pose.position;
    let (sp, cp) = sin_cos(xi.phi);
    let raw = StairLine {
        r: xi.r - x * cp - y * sp,
        phi: xi.phi - pose.yaw,
        z_start: xi.z_start - z,
        z_end: xi.z_end - z,
    };
    let mut h = Matrix4::identity();
    h[(0, 1)] = x * sp - y * cp;
    #[rustfmt::skip]
    let mut hp = Matrix4::new(
        -cp, -sp, 0.0,  0.0,
        0.0, 0.0, 0.0, -1.0,
        0.0, 0.0, -1.0, 0.0,
        0.0, 0.0, -1.0, 0.0,
    );
    let (out, flipped) = raw.normalized();
    if flipped {
        for c in 0..4 {
            h[(0, c)] = -h[(0, c)];
            hp[(0, c)] = -hp[(0, c)];
        }
    }
    (out, h, hp)
}

/// `p_world = R(theta) p_local + t`.
pub fn point_to_world(p: &[f64; 3], pose: &RobotPose) -> [f64; 3] {
    let (s, c) = sin_cos(pose.yaw);
    let t = pose.position;
    [c * p[0] - s * p[1] + t[0], s * p[0] + c * p[1] + t[1], p[2] + t[2]]
}

pub fn point_to_local(p: &[f64; 3], pose: &RobotPose) -> [f64; 3] {
    let (s, c) = sin_cos(pose.yaw);
    let t = pose.position;
    let (dx, dy) = (p[0] - t[0], p[1] - t[1]);
    [c * dx + s * dy, -s * dx + c * dy, p[2] - t[2]]
}

pub fn endpoints_to_world(local: &StairEndpoints, pose: &RobotPose) -> StairEndpoints {
    StairEndpoints { start: point_to_world(&local.start, pose), end: point_to_world(&local.end, pose) }
}

pub fn endpoints_to_local(world: &StairEndpoints, pose: &RobotPose) -> StairEndpoints {
    StairEndpoints { start: point_to_local(&world.start, pose), end: point_to_local(&world.end, pose) }
}

/// World-frame covariance of a measured line:
/// `G_z Q G_z^T + G_pose Sigma_pose G_pose^T`.
pub fn init_line_covariance(
    zeta: &StairLine,
    pose: &RobotPose,
    q: &Matrix4<f64>,
    pose_cov: &Matrix4<f64>,
) -> Matrix4<f64> {
    let (_, gz, gp) = line_to_world_with_jacobians(zeta, pose);
    let s = gz * q * gz.transpose() + gp * pose_cov * gp.transpose();
    0.5 * (s + s.transpose())
}

/// World-frame stairs of a frame, endpoints oriented start-right/end-left.
pub fn frame_to_world(frame: &MeasurementFrame) -> Vec<Stair> {
    frame
        .lines
        .iter()
        .zip(&frame.endpoints)
        .map(|(l, e)| Stair::new(line_to_world(l, &frame.pose), endpoints_to_world(e, &frame.pose)))
        .collect()
}

/// Puts every stair's start endpoint on the right-hand side looking up the
/// flight.
pub(crate) fn orient_endpoints(stairs: &mut [Stair]) {
    let n = stairs.len();
    if n < 2 {
        return;
    }
    let centers: Vec<[f64; 2]> = stairs.iter().map(|s| s.endpoints.center_xy()).collect();
    let yaws = ascending_yaws(stairs, &centers);
    for (i, &yaw) in yaws.iter().enumerate() {
        // left of the ascending direction
        let left = [-crate::math::sin(yaw), cos(yaw)];
        let e = &stairs[i].endpoints;
        let along = (e.end[0] - e.start[0]) * left[0] + (e.end[1] - e.start[1]) * left[1];
        if along < 0.0 {
            let s = &mut stairs[i];
            s.endpoints = s.endpoints.swapped();
            core::mem::swap(&mut s.line.z_start, &mut s.line.z_end);
        }
    }
}

/// Initialises a belief from a frame with at least two stairs.
pub fn initialize_belief(frame: &MeasurementFrame) -> Result<StaircaseBelief> {
    frame.validate()?;
    let m = frame.len();
    if m < 2 {
        return Err(Error::TooFewStairs(m));
    }
    let q = frame.noise.measurement_covariance();
    let pose_cov = frame.noise.pose_covariance_matrix();
    let mut covariance = DMatrix::zeros(4 * m, 4 * m);
    let mut stairs = frame_to_world(frame);
    for (i, zeta) in frame.lines.iter().enumerate() {
        let block = init_line_covariance(zeta, &frame.pose, &q, &pose_cov);
        covariance.fixed_view_mut::<4, 4>(4 * i, 4 * i).copy_from(&block);
    }
    sort_with_covariance(&mut stairs, &mut covariance);
    let before: Vec<StairLine> = stairs.iter().map(|s| s.line).collect();
    orient_endpoints(&mut stairs);
    // swapping z_start/z_end permutes the matching covariance rows
    for (i, (s, b)) in stairs.iter().zip(&before).enumerate() {
        if s.line.z_start != b.z_start || s.line.z_end != b.z_end {
            swap_z_rows(&mut covariance, i);
        }
    }
    let params = derive_params(&stairs)?;
    Ok(StaircaseBelief { stairs, covariance, params, frame_id: String::from("world") })
}

pub(crate) fn swap_z_rows(cov: &mut DMatrix<f64>, i: usize) {
    cov.swap_rows(4 * i + 2, 4 * i + 3);
    cov.swap_columns(4 * i + 2, 4 * i + 3);
}

/// Sorts stairs by mean elevation (ties by distance from the origin) and
/// permutes the covariance to match.
pub(crate) fn sort_with_covariance(stairs: &mut Vec<Stair>, cov: &mut DMatrix<f64>) {
    let n = stairs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let (sa, sb) = (&stairs[a], &stairs[b]);
        sa.elevation()
            .total_cmp(&sb.elevation())
            .then(sa.line.r.total_cmp(&sb.line.r))
    });
    if order.iter().enumerate().all(|(i, &o)| i == o) {
        return;
    }
    let old = cov.clone();
    let idx: Vec<usize> = order.iter().flat_map(|&o| (0..4).map(move |k| 4 * o + k)).collect();
    for (i, &a) in idx.iter().enumerate() {
        for (j, &b) in idx.iter().enumerate() {
            cov[(i, j)] = old[(a, b)];
        }
    }
    let sorted: Vec<Stair> = order.iter().map(|&o| stairs[o]).collect();
    *stairs = sorted;
}
