// SPDX-License-Identifier: Apache-2.0

//! Neighbour-based stair prediction.
//!
//! A stair is predicted from an adjacent one by rotating the edge by the
//! curvature angle and stepping its centre one tread depth along the
//! bisector of the two stairs' ascending yaws. The line update keeps the
//! familiar structure `r' = r + eta*rho*(d - l*sin(gamma*eta*dpsi))` where
//! `l` is the offset of the source centre from the foot of the perpendicular
//! and `gamma` its side; the `cos` factors on `r` and `d` make the step exact
//! for circular-arc staircases rather than first-order accurate.

use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

use nalgebra::{Matrix4, SMatrix};
use serde::{Deserialize, Serialize};

use crate::math::{cos, dot2, sin, unit, wrap};
use crate::model::{Stair, StairEndpoints, StairLine, StaircaseParams};

pub type ParamJacobian = SMatrix<f64, 4, 6>;
pub type CenterJacobian = SMatrix<f64, 4, 2>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// Predict the stair above (`eta = +1`).
    Next,
    /// Predict the stair below (`eta = -1`).
    Previous,
}

impl Direction {
    pub fn eta(self) -> f64 {
        match self {
            Direction::Next => 1.0,
            Direction::Previous => -1.0,
        }
    }
}

/// Every intermediate quantity of one prediction step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionGeometry {
    pub eta: f64,
    /// `+1` when the line normal points up the staircase, `-1` otherwise.
    pub rho: f64,
    /// Side of the foot of the perpendicular the source centre lies on.
    pub gamma: f64,
    /// Distance from the foot of the perpendicular to the source centre.
    pub l: f64,
    pub center: [f64; 2],
    pub depth_start: f64,
    pub depth_end: f64,
    /// Extrapolation base yaw (`start_yaw` going up, `end_yaw` going down).
    pub base_yaw: f64,
    /// Model ascending yaw of the source stair.
    pub source_yaw: f64,
    /// Direction both endpoints travel along.
    pub step_yaw: f64,
}

/// Model ascending yaw of the source stair when the target is
/// `steps_from_edge` stairs away from the extrapolation base edge.
pub fn source_yaw(params: &StaircaseParams, direction: Direction, steps_from_edge: usize) -> f64 {
    let eta = direction.eta();
    let base = match direction {
        Direction::Next => params.start_yaw,
        Direction::Previous => params.end_yaw,
    };
    let k = steps_from_edge.max(1) as f64;
    wrap(base + eta * (k - 1.0) * params.curvature)
}

pub fn geometry(
    source: &Stair,
    params: &StaircaseParams,
    direction: Direction,
    steps_from_edge: usize,
) -> PredictionGeometry {
    let eta = direction.eta();
    let dpsi = params.curvature;
    let yaw = source_yaw(params, direction, steps_from_edge);
    let line = &source.line;
    let rho = if wrap(yaw - line.phi).abs() < FRAC_PI_2 { 1.0 } else { -1.0 };
    let center = source.endpoints.center_xy();
    let s = dot2(line.direction(), center);
    let side = if s < 0.0 { -1.0 } else { 1.0 };
    let half = sin(0.5 * dpsi);
    PredictionGeometry {
        eta,
        rho,
        gamma: -eta * rho * side,
        l: s.abs(),
        center,
        depth_start: params.depth + params.width * half,
        depth_end: params.depth - params.width * half,
        base_yaw: match direction {
            Direction::Next => params.start_yaw,
            Direction::Previous => params.end_yaw,
        },
        source_yaw: yaw,
        step_yaw: wrap(yaw + 0.5 * eta * dpsi),
    }
}

/// Predicted line with its Jacobians with respect to the source line and to
/// the staircase parameters. The source centre (from the endpoint state) is
/// held constant.
pub fn predict_line_with_jacobians(
    source: &Stair,
    params: &StaircaseParams,
    direction: Direction,
    steps_from_edge: usize,
) -> (StairLine, Matrix4<f64>, ParamJacobian) {
    let (line, jx, js, _) = predict_line_full(source, params, direction, steps_from_edge);
    (line, jx, js)
}

/// As [`predict_line_with_jacobians`], plus the Jacobian with respect to the
/// source centre (only `r` depends on it).
pub fn predict_line_full(
    source: &Stair,
    params: &StaircaseParams,
    direction: Direction,
    steps_from_edge: usize,
) -> (StairLine, Matrix4<f64>, ParamJacobian, CenterJacobian) {
    let g = geometry(source, params, direction, steps_from_edge);
    let line = &source.line;
    let eta = g.eta;
    let dpsi = params.curvature;
    let turn = eta * dpsi;
    let (sin_turn, cos_turn) = (sin(turn), cos(turn));
    let half_cos = cos(0.5 * dpsi);

    let r = line.r * cos_turn + eta * g.rho * (params.depth * half_cos - g.l * sin(g.gamma * turn));
    let raw = StairLine {
        r,
        phi: line.phi + turn,
        z_start: line.z_start + eta * params.height,
        z_end: line.z_end + eta * params.height,
    };

    let n_dot_c = dot2(line.normal(), g.center);
    let s = dot2(line.direction(), g.center);
    let mut jx = Matrix4::identity();
    jx[(0, 0)] = cos_turn;
    jx[(0, 1)] = -n_dot_c * sin_turn;

    let mut js = ParamJacobian::zeros();
    js[(0, StaircaseParams::DEPTH)] = eta * g.rho * half_cos;
    js[(0, StaircaseParams::CURVATURE)] =
        -line.r * eta * sin_turn + s * eta * cos_turn - 0.5 * eta * g.rho * params.depth * sin(0.5 * dpsi);
    js[(1, StaircaseParams::CURVATURE)] = eta;
    js[(2, StaircaseParams::HEIGHT)] = eta;
    js[(3, StaircaseParams::HEIGHT)] = eta;

    let t = line.direction();
    let mut jc = CenterJacobian::zeros();
    jc[(0, 0)] = t[0] * sin_turn;
    jc[(0, 1)] = t[1] * sin_turn;

    let (out, flipped) = raw.normalized();
    if flipped {
        for c in 0..4 {
            jx[(0, c)] = -jx[(0, c)];
        }
        for c in 0..6 {
            js[(0, c)] = -js[(0, c)];
        }
        for c in 0..2 {
            jc[(0, c)] = -jc[(0, c)];
        }
    }
    (out, jx, js, jc)
}

/// Derivative of the predicted edge centre with respect to the parameters.
/// The centre moves by `eta * d` along the step yaw; width cancels.
pub fn center_param_jacobian(
    params: &StaircaseParams,
    direction: Direction,
    steps_from_edge: usize,
) -> SMatrix<f64, 2, 6> {
    let eta = direction.eta();
    let k = steps_from_edge.max(1) as f64;
    let theta = source_yaw(params, direction, steps_from_edge) + 0.5 * eta * params.curvature;
    let u = unit(theta);
    let du = [-u[1], u[0]];
    let base = match direction {
        Direction::Next => StaircaseParams::START_YAW,
        Direction::Previous => StaircaseParams::END_YAW,
    };
    let mut j = SMatrix::<f64, 2, 6>::zeros();
    for a in 0..2 {
        j[(a, StaircaseParams::DEPTH)] = eta * u[a];
        j[(a, base)] = eta * params.depth * du[a];
        j[(a, StaircaseParams::CURVATURE)] = eta * params.depth * du[a] * eta * (k - 0.5);
    }
    j
}

pub fn predict_line(
    source: &Stair,
    params: &StaircaseParams,
    direction: Direction,
    steps_from_edge: usize,
) -> StairLine {
    predict_line_with_jacobians(source, params, direction, steps_from_edge).0
}

/// Advances both endpoints along the step yaw by their curvature-corrected
/// depths and shifts their elevation by one stair height.
pub fn predict_endpoints(
    source: &StairEndpoints,
    params: &StaircaseParams,
    direction: Direction,
    steps_from_edge: usize,
) -> StairEndpoints {
    let eta = direction.eta();
    let yaw = source_yaw(params, direction, steps_from_edge);
    let u = unit(yaw + 0.5 * eta * params.curvature);
    let half = sin(0.5 * params.curvature);
    let ds = params.depth + params.width * half;
    let de = params.depth - params.width * half;
    let step = |p: &[f64; 3], depth: f64| {
        [p[0] + eta * depth * u[0], p[1] + eta * depth * u[1], p[2] + eta * params.height]
    };
    StairEndpoints { start: step(&source.start, ds), end: step(&source.end, de) }
}

pub fn predict_stair(
    source: &Stair,
    params: &StaircaseParams,
    direction: Direction,
    steps_from_edge: usize,
) -> Stair {
    Stair {
        line: predict_line(source, params, direction, steps_from_edge),
        endpoints: predict_endpoints(&source.endpoints, params, direction, steps_from_edge),
    }
}

/// Predicts `count` stairs outward from `edge`, each from the previous
/// prediction. `first_steps` is the step count of the first target from the
/// extrapolation base edge (1 when `edge` is itself the base edge).
pub fn predict_chain(
    edge: &Stair,
    params: &StaircaseParams,
    direction: Direction,
    count: usize,
    first_steps: usize,
) -> Vec<Stair> {
    let mut out = Vec::with_capacity(count);
    let mut current = *edge;
    for k in 0..count {
        current = predict_stair(&current, params, direction, first_steps + k);
        out.push(current);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{atan2, to_radians};

    fn params(dpsi: f64, yaw: f64) -> StaircaseParams {
        StaircaseParams { height: 0.17, depth: 0.28, width: 1.0, start_yaw: yaw, end_yaw: yaw, curvature: dpsi }
    }

    fn straight_source() -> Stair {
        Stair::new(StairLine::new(2.0, 0.0, 0.1, 0.1), StairEndpoints::new([2.0, -0.5, 0.1], [2.0, 0.5, 0.1]))
    }

    #[test]
    fn straight_next_and_previous() {
        let p = params(0.0, 0.0);
        let next = predict_line(&straight_source(), &p, Direction::Next, 1);
        assert!((next.r - 2.28).abs() < 1e-12 && next.phi.abs() < 1e-12);
        assert!((next.z_start - 0.27).abs() < 1e-12 && (next.z_end - 0.27).abs() < 1e-12);
        let prev = predict_line(&straight_source(), &p, Direction::Previous, 1);
        assert!((prev.r - 1.72).abs() < 1e-12);
        assert!((prev.z_start + 0.07).abs() < 1e-12);
        let g = geometry(&straight_source(), &p, Direction::Next, 1);
        assert_eq!(g.rho, 1.0);
    }

    #[test]
    fn straight_endpoints() {
        let p = params(0.0, 0.0);
        let e = predict_endpoints(&straight_source().endpoints, &p, Direction::Next, 1);
        for (a, b) in e.start.iter().zip([2.28, -0.5, 0.27]) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in e.end.iter().zip([2.28, 0.5, 0.27]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rho_flips_when_normal_points_down_the_stairs() {
        // staircase ascends toward -x while the normal points +x
        let p = params(0.0, core::f64::consts::PI);
        let next = predict_line(&straight_source(), &p, Direction::Next, 1);
        assert!((next.r - 1.72).abs() < 1e-12);
        assert_eq!(geometry(&straight_source(), &p, Direction::Next, 1).rho, -1.0);
    }

    #[test]
    fn previous_uses_end_yaw() {
        let mut p = params(to_radians(5.0), 0.3);
        p.end_yaw = -1.1;
        let g = geometry(&straight_source(), &p, Direction::Previous, 1);
        assert_eq!(g.base_yaw, -1.1);
        assert_eq!(g.source_yaw, -1.1);
    }

    #[test]
    fn depth_difference_is_curvature_corrected() {
        let p = params(to_radians(5.0), 0.0);
        let g = geometry(&straight_source(), &p, Direction::Next, 1);
        assert!((g.depth_start + g.depth_end - 2.0 * p.depth).abs() < 1e-15);
        // chord difference of the inner and outer rails of a circular arc
        let expect = 2.0 * p.width * libm::sin(0.5 * p.curvature);
        assert!((g.depth_start - g.depth_end - expect).abs() < 1e-15);
        // first-order agreement with w*sin(dpsi)
        assert!((g.depth_start - g.depth_end - p.width * libm::sin(p.curvature)).abs() < 1e-4);
    }

    #[test]
    fn chain_is_linear_on_straight_stairs() {
        let p = params(0.0, 0.0);
        let src = straight_source();
        let chain = predict_chain(&src, &p, Direction::Next, 3, 1);
        assert_eq!(chain.len(), 3);
        assert!((chain[2].line.r - (2.0 + 3.0 * 0.28)).abs() < 1e-12);
        assert!((chain[2].line.z_start - (0.1 + 3.0 * 0.17)).abs() < 1e-12);
        assert_eq!(predict_chain(&src, &p, Direction::Next, 1, 1)[0], predict_stair(&src, &p, Direction::Next, 1));
    }

    /// Independent arc oracle: stair k is stair 0 rotated about the arc
    /// centre by k*dpsi and lifted by k*h.
    fn arc_stair(k: i32, dpsi: f64, yaw0: f64, c0: [f64; 2], radius: f64, w: f64) -> Stair {
        let t0 = unit(yaw0 + FRAC_PI_2);
        let o = [c0[0] + radius * t0[0], c0[1] + radius * t0[1]];
        let rot = |p: [f64; 2], a: f64| {
            let (s, c) = (libm::sin(a), libm::cos(a));
            let v = [p[0] - o[0], p[1] - o[1]];
            [o[0] + c * v[0] - s * v[1], o[1] + s * v[0] + c * v[1]]
        };
        let a = k as f64 * dpsi;
        let s0 = [c0[0] - 0.5 * w * t0[0], c0[1] - 0.5 * w * t0[1]];
        let e0 = [c0[0] + 0.5 * w * t0[0], c0[1] + 0.5 * w * t0[1]];
        let z = 0.17 * (k + 1) as f64;
        let s = rot(s0, a);
        let e = rot(e0, a);
        let ep = StairEndpoints::new([s[0], s[1], z], [e[0], e[1], z]);
        // refit the polar line from the two rotated points
        let dir = [e[0] - s[0], e[1] - s[1]];
        let phi = atan2(-dir[0], dir[1]);
        let n = unit(phi);
        let line = StairLine::new(n[0] * s[0] + n[1] * s[1], phi, z, z);
        Stair::new(line, ep)
    }

    fn close(a: &StairLine, b: &StairLine, tol_m: f64, tol_rad: f64) -> bool {
        let (b, _) = b.aligned_to(a.phi);
        (a.r - b.r).abs() < tol_m
            && wrap(a.phi - b.phi).abs() < tol_rad
            && (a.z_start - b.z_start).abs() < tol_m
            && (a.z_end - b.z_end).abs() < tol_m
    }

    #[test]
    fn curved_prediction_matches_arc_oracle() {
        let dpsi = to_radians(5.0);
        let yaw0 = 0.4;
        let c0 = [3.0, -1.5];
        let depth = 0.28;
        let radius = depth / (2.0 * libm::sin(0.5 * dpsi));
        let p = StaircaseParams { height: 0.17, depth, width: 1.0, start_yaw: yaw0, end_yaw: yaw0 + 9.0 * dpsi, curvature: dpsi };
        let truth: Vec<Stair> = (0..10).map(|k| arc_stair(k, dpsi, yaw0, c0, radius, 1.0)).collect();
        for j in 0..9 {
            let pred = predict_stair(&truth[j], &p, Direction::Next, j + 1);
            assert!(close(&pred.line, &truth[j + 1].line, 1e-9, 1e-12), "next {j}");
            for (a, b) in pred.endpoints.start.iter().zip(truth[j + 1].endpoints.start) {
                assert!((a - b).abs() < 1e-9);
            }
            let prev = predict_stair(&truth[j + 1], &p, Direction::Previous, 9 - j);
            assert!(close(&prev.line, &truth[j].line, 1e-9, 1e-12), "prev {j}");
        }
        let chain = predict_chain(&truth[2], &p, Direction::Next, 4, 3);
        assert!(close(&chain[3].line, &truth[6].line, 1e-9, 1e-12));
        for (a, b) in chain[3].endpoints.end.iter().zip(truth[6].endpoints.end) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn line_jacobians_match_finite_differences() {
        let dpsi = to_radians(4.0);
        let p = StaircaseParams { height: 0.18, depth: 0.3, width: 1.4, start_yaw: 0.7, end_yaw: 1.1, curvature: dpsi };
        let src = Stair::new(StairLine::new(2.5, 0.65, 0.2, 0.21), StairEndpoints::new([1.5, 2.3, 0.2], [0.8, 3.1, 0.21]));
        for dir in [Direction::Next, Direction::Previous] {
            let (_, jx, js) = predict_line_with_jacobians(&src, &p, dir, 3);
            let h = 1e-6;
            for c in 0..4 {
                let mut plus = src;
                let mut minus = src;
                let mut v = plus.line.to_vector();
                v[c] += h;
                plus.line = StairLine::from_vector(&v);
                v[c] -= 2.0 * h;
                minus.line = StairLine::from_vector(&v);
                let a = predict_line(&plus, &p, dir, 3).to_vector();
                let b = predict_line(&minus, &p, dir, 3).to_vector();
                for r in 0..4 {
                    let fd = (a[r] - b[r]) / (2.0 * h);
                    assert!((fd - jx[(r, c)]).abs() < 1e-6, "x {r} {c}: {fd} vs {}", jx[(r, c)]);
                }
            }
            for c in 0..6 {
                let mut a6 = p.to_array();
                a6[c] += h;
                let a = predict_line(&src, &StaircaseParams::from_array(a6), dir, 3).to_vector();
                a6[c] -= 2.0 * h;
                let b = predict_line(&src, &StaircaseParams::from_array(a6), dir, 3).to_vector();
                for r in 0..4 {
                    let fd = (a[r] - b[r]) / (2.0 * h);
                    assert!((fd - js[(r, c)]).abs() < 1e-6, "s {r} {c}: {fd} vs {}", js[(r, c)]);
                }
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn next_then_previous_round_trips_on_straight_stairs(
            r in 0.5f64..6.0, phi in -3.0f64..3.0, z in -1.0f64..2.0,
            d in 0.2f64..0.4, h in 0.1f64..0.25, offset in -2.0f64..2.0, asc in proptest::bool::ANY,
        ) {
            let yaw = if asc { phi } else { wrap(phi + core::f64::consts::PI) };
            let p = StaircaseParams { height: h, depth: d, width: 1.0, start_yaw: yaw, end_yaw: yaw, curvature: 0.0 };
            let line = StairLine::new(r, phi, z, z);
            let n = line.normal();
            let t = line.direction();
            let c = [r * n[0] + offset * t[0], r * n[1] + offset * t[1]];
            let src = Stair::new(line, StairEndpoints::new([c[0] - 0.5 * t[0], c[1] - 0.5 * t[1], z], [c[0] + 0.5 * t[0], c[1] + 0.5 * t[1], z]));
            let up = predict_stair(&src, &p, Direction::Next, 1);
            proptest::prop_assert!((up.line.z_start - z - h).abs() < 1e-12);
            proptest::prop_assert!(((up.endpoints.span_xy()) - 1.0).abs() < 1e-12);
            let back = predict_stair(&up, &p, Direction::Previous, 1);
            proptest::prop_assert!(close(&back.line, &src.line, 1e-9, 1e-12));
            let (aligned, _) = up.line.aligned_to(src.line.phi);
            proptest::prop_assert!(((aligned.r - src.line.r).abs() - d).abs() < 1e-9);
        }
    }
}
