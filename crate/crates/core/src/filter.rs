// SPDX-License-Identifier: Apache-2.0

//! The estimator: neighbour-averaging process model with dynamic resize,
//! stacked EKF update of the line state, endpoint growth by span
//! maximisation, and landing splits.

use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector, Matrix4, SMatrix};
use serde::{Deserialize, Serialize};

use crate::association::{
    flip_r, line_residual, match_prepared, model_yaw, prepare_measurements, AssociationConfig,
    MatchResult, PreparedMeasurement,
};
use crate::error::{Error, Result};
use crate::frames::line_to_local_with_jacobians;
use crate::math::{circular_mean, dist_xy, dot2, unit};
use crate::model::{
    derive_params, detect_landing, MeasurementFrame, NoiseConfig, Stair, StairEndpoints, StairLine,
    StaircaseBelief, StaircaseParams,
};
use crate::predict::{
    center_param_jacobian, predict_endpoints, predict_line_full, predict_line_with_jacobians, Direction,
    ParamJacobian,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub association: AssociationConfig,
    /// Landing threshold as a multiple of the median step depth.
    pub landing_kappa: f64,
    /// Minimum landing depth (m).
    pub landing_floor: f64,
    /// Also pull stairs that were not seen this frame towards their
    /// neighbours' predictions.
    pub smooth_unmatched: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { association: AssociationConfig::default(), landing_kappa: 2.5, landing_floor: 0.5, smooth_unmatched: true }
    }
}

/// Predicted belief with the Jacobians that carried the covariance over.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub belief: StaircaseBelief,
    /// `4N' x 4N`
    pub f_x: DMatrix<f64>,
    /// `4N' x 6`
    pub f_s: DMatrix<f64>,
    /// Number of stairs added below the old flight.
    pub added_below: usize,
}

struct Candidate {
    line: StairLine,
    jx: Matrix4<f64>,
    js: ParamJacobian,
    source: usize,
}

fn negate_r_row(jx: &mut Matrix4<f64>, js: &mut ParamJacobian) {
    for c in 0..4 {
        jx[(0, c)] = -jx[(0, c)];
    }
    for c in 0..6 {
        js[(0, c)] = -js[(0, c)];
    }
}

fn neighbour_candidate(
    stairs: &[Stair],
    params: &StaircaseParams,
    source: usize,
    direction: Direction,
    steps: usize,
    reference_phi: f64,
) -> Candidate {
    let (line, mut jx, mut js) = predict_line_with_jacobians(&stairs[source], params, direction, steps);
    let (line, sign) = line.aligned_to(reference_phi);
    if sign < 0.0 {
        negate_r_row(&mut jx, &mut js);
    }
    Candidate { line, jx, js, source }
}

fn average_endpoints(list: &[StairEndpoints]) -> StairEndpoints {
    let k = list.len() as f64;
    let mut s = [0.0; 3];
    let mut e = [0.0; 3];
    for p in list {
        for c in 0..3 {
            s[c] += p.start[c] / k;
            e[c] += p.end[c] / k;
        }
    }
    StairEndpoints::new(s, e)
}

/// The prediction map on its own: new stairs, their Jacobians and the
/// averaged existing stairs. `smooth[i]` selects which existing stairs are
/// averaged with their neighbours.
pub fn predict_state(
    stairs: &[Stair],
    params: &StaircaseParams,
    below: usize,
    above: usize,
    smooth: &[bool],
) -> (Vec<Stair>, DMatrix<f64>, DMatrix<f64>) {
    let n = stairs.len();
    let total = below + n + above;
    let mut out = alloc::vec![stairs[0]; total];
    let mut f_x = DMatrix::zeros(4 * total, 4 * n);
    let mut f_s = DMatrix::zeros(4 * total, 6);

    for i in 0..n {
        let own = &stairs[i];
        let mut cands = alloc::vec![Candidate { line: own.line, jx: Matrix4::identity(), js: ParamJacobian::zeros(), source: i }];
        let mut ends = alloc::vec![own.endpoints];
        if smooth[i] {
            if i >= 1 {
                cands.push(neighbour_candidate(stairs, params, i - 1, Direction::Next, i, own.line.phi));
                ends.push(predict_endpoints(&stairs[i - 1].endpoints, params, Direction::Next, i));
            }
            if i + 1 < n {
                cands.push(neighbour_candidate(stairs, params, i + 1, Direction::Previous, n - 1 - i, own.line.phi));
                ends.push(predict_endpoints(&stairs[i + 1].endpoints, params, Direction::Previous, n - 1 - i));
            }
        }
        let m = cands.len() as f64;
        let phis: Vec<f64> = cands.iter().map(|c| c.line.phi).collect();
        let (phi, weights) = circular_mean(&phis);
        let raw = StairLine {
            r: cands.iter().map(|c| c.line.r).sum::<f64>() / m,
            phi,
            z_start: cands.iter().map(|c| c.line.z_start).sum::<f64>() / m,
            z_end: cands.iter().map(|c| c.line.z_end).sum::<f64>() / m,
        };
        let (line, flipped) = raw.normalized();
        let row = 4 * (below + i);
        let mut block_s = ParamJacobian::zeros();
        for (c, w) in cands.iter().zip(weights) {
            let a = Matrix4::from_diagonal(&nalgebra::Vector4::new(1.0 / m, w, 1.0 / m, 1.0 / m));
            let mut bx = a * c.jx;
            if flipped {
                for k in 0..4 {
                    bx[(0, k)] = -bx[(0, k)];
                }
            }
            let mut view = f_x.fixed_view_mut::<4, 4>(row, 4 * c.source);
            view += bx;
            block_s += a * c.js;
        }
        if flipped {
            for k in 0..6 {
                block_s[(0, k)] = -block_s[(0, k)];
            }
        }
        f_s.fixed_view_mut::<4, 6>(row, 0).copy_from(&block_s);
        out[below + i] = Stair::new(line, average_endpoints(&ends));
    }

    let mut chain = |edge: usize, direction: Direction, count: usize, slot: &dyn Fn(usize) -> usize| {
        let mut current = stairs[edge];
        let mut jx_total = Matrix4::identity();
        let mut js_total = ParamJacobian::zeros();
        // sensitivity of the current source centre to the parameters
        let mut jc_total = SMatrix::<f64, 2, 6>::zeros();
        for k in 1..=count {
            let steps = n + k - 1;
            let (line, jx, js, jc) = predict_line_full(&current, params, direction, steps);
            let endpoints = predict_endpoints(&current.endpoints, params, direction, steps);
            jx_total = jx * jx_total;
            js_total = jx * js_total + js + jc * jc_total;
            jc_total += center_param_jacobian(params, direction, steps);
            current = Stair::new(line, endpoints);
            let row = 4 * slot(k);
            f_x.fixed_view_mut::<4, 4>(row, 4 * edge).copy_from(&jx_total);
            f_s.fixed_view_mut::<4, 6>(row, 0).copy_from(&js_total);
            out[slot(k)] = current;
        }
    };
    chain(0, Direction::Previous, below, &|k| below - k);
    chain(n - 1, Direction::Next, above, &|k| below + n - 1 + k);
    (out, f_x, f_s)
}

/// Resizes and predicts the belief given the association of the incoming
/// frame, propagating `Sigma' = F_X Sigma F_X^T + F_S R F_S^T`.
pub fn process_predict(
    belief: &StaircaseBelief,
    matches: &MatchResult,
    noise: &NoiseConfig,
    config: &FilterConfig,
) -> Prediction {
    let n = belief.len();
    let below = matches.preceding_count();
    let above = matches.succeeding_count();
    let mut smooth = alloc::vec![config.smooth_unmatched; n];
    for &(i, _) in &matches.matched {
        smooth[i] = true;
    }
    let (stairs, f_x, f_s) = predict_state(&belief.stairs, &belief.params, below, above, &smooth);
    let r = DMatrix::from_fn(6, 6, |i, j| noise.parameter_covariance()[(i, j)]);
    let cov = &f_x * &belief.covariance * f_x.transpose() + &f_s * r * f_s.transpose();
    let covariance = symmetrize(cov);
    Prediction {
        belief: StaircaseBelief { stairs, covariance, params: belief.params, frame_id: belief.frame_id.clone() },
        f_x,
        f_s,
        added_below: below,
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// Restores symmetry and positive semidefiniteness. Eigenvalues are only
/// clamped when a lightly regularised Cholesky factorisation fails.
pub(crate) fn repair_covariance(m: DMatrix<f64>) -> DMatrix<f64> {
    let m = symmetrize(m);
    let n = m.nrows();
    if n == 0 {
        return m;
    }
    let scale = m.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let jitter = DMatrix::identity(n, n) * (1e-12 * scale);
    if nalgebra::Cholesky::new(&m + jitter).is_some() {
        return m;
    }
    let mut eig = m.symmetric_eigen();
    for v in eig.eigenvalues.iter_mut() {
        *v = v.max(0.0);
    }
    symmetrize(eig.recompose())
}

/// Stacked EKF update of every stair that has a measurement. Stairs without
/// one move only through their correlation with updated stairs.
pub(crate) fn ekf_update_prepared(
    predicted: &StaircaseBelief,
    frame: &MeasurementFrame,
    prepared: &[PreparedMeasurement],
    pairs: &[(usize, usize)],
) -> Result<StaircaseBelief> {
    let mut out = predicted.clone();
    if pairs.is_empty() {
        return Ok(out);
    }
    let dim = 4 * predicted.len();
    let rows = 4 * pairs.len();
    let mut h = DMatrix::zeros(rows, dim);
    let mut hp = DMatrix::zeros(rows, 4);
    let mut noise = DMatrix::zeros(rows, rows);
    let mut y = DVector::zeros(rows);
    for (b, &(j, m)) in pairs.iter().enumerate() {
        let pm = &prepared[m];
        let (expected, hj, hpj) = line_to_local_with_jacobians(&predicted.stairs[j].line, &frame.pose);
        let (res, sign) = line_residual(&pm.local, &expected);
        let mut q = pm.q_local;
        if sign < 0.0 {
            flip_r(&mut q);
        }
        h.fixed_view_mut::<4, 4>(4 * b, 4 * j).copy_from(&hj);
        hp.fixed_view_mut::<4, 4>(4 * b, 0).copy_from(&hpj);
        noise.fixed_view_mut::<4, 4>(4 * b, 4 * b).copy_from(&q);
        for k in 0..4 {
            y[4 * b + k] = res[k];
        }
    }
    // the pose error is shared by every line of the frame
    let pose_cov = DMatrix::from_fn(4, 4, |i, j| frame.noise.pose_covariance[i][j]);
    noise += &hp * pose_cov * hp.transpose();

    let sigma = &predicted.covariance;
    let h_sigma = &h * sigma;
    let s = symmetrize(&h_sigma * h.transpose() + &noise);
    let chol = nalgebra::Cholesky::new(s).ok_or(Error::SingularInnovationCovariance)?;
    // K = Sigma H^T S^-1 = (S^-1 H Sigma)^T
    let gain = chol.solve(&h_sigma).transpose();
    let dx = &gain * y;
    if dx.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("state update"));
    }
    let a = DMatrix::identity(dim, dim) - &gain * &h;
    let cov = &a * sigma * a.transpose() + &gain * noise * gain.transpose();
    let mut cov = symmetrize(cov);

    for (i, stair) in out.stairs.iter_mut().enumerate() {
        let l = &mut stair.line;
        let raw = StairLine {
            r: l.r + dx[4 * i],
            phi: l.phi + dx[4 * i + 1],
            z_start: l.z_start + dx[4 * i + 2],
            z_end: l.z_end + dx[4 * i + 3],
        };
        let (line, flipped) = raw.normalized();
        if flipped {
            let r = 4 * i;
            for k in 0..dim {
                cov[(r, k)] = -cov[(r, k)];
            }
            for k in 0..dim {
                cov[(k, r)] = -cov[(k, r)];
            }
        }
        *l = line;
    }
    out.covariance = repair_covariance(cov);
    Ok(out)
}

/// Keeps, for each measured stair, the pair among the predicted and measured
/// endpoints that spans the most in XY, then snaps every stair's endpoints
/// onto its updated line.
pub(crate) fn update_endpoints_prepared(
    updated: &StaircaseBelief,
    predicted: &StaircaseBelief,
    prepared: &[PreparedMeasurement],
    pairs: &[(usize, usize)],
) -> StaircaseBelief {
    let mut out = updated.clone();
    for &(j, m) in pairs {
        let prior = predicted.stairs[j].endpoints;
        let meas = prepared[m].world.endpoints;
        let pts = [prior.start, prior.end, meas.start, meas.end];
        let mut best = (0, 1);
        let mut best_d = dist_xy(&pts[0], &pts[1]);
        for a in 0..4 {
            for b in a + 1..4 {
                let d = dist_xy(&pts[a], &pts[b]);
                if d > best_d {
                    best_d = d;
                    best = (a, b);
                }
            }
        }
        let (mut s, mut e) = (pts[best.0], pts[best.1]);
        let left = unit(model_yaw(predicted, j) + FRAC_PI_2);
        let reference = [prior.end[0] - prior.start[0], prior.end[1] - prior.start[1]];
        let axis = if dot2(reference, reference) > 1e-12 { reference } else { left };
        if dot2([e[0] - s[0], e[1] - s[1]], axis) < 0.0 {
            core::mem::swap(&mut s, &mut e);
        }
        out.stairs[j].endpoints = StairEndpoints::new(s, e);
    }
    for s in out.stairs.iter_mut() {
        s.endpoints = s.endpoints.reprojected(&s.line);
    }
    out
}

pub fn update_endpoints(
    updated: &StaircaseBelief,
    predicted: &StaircaseBelief,
    frame: &MeasurementFrame,
    pairs: &[(usize, usize)],
) -> StaircaseBelief {
    let prepared = prepare_measurements(predicted, frame);
    update_endpoints_prepared(updated, predicted, &prepared, pairs)
}

/// EKF update against `frame`. `pairs` are `(state index, measurement index)`
/// in the predicted belief's indexing.
pub fn ekf_update(
    predicted: &StaircaseBelief,
    frame: &MeasurementFrame,
    pairs: &[(usize, usize)],
) -> Result<StaircaseBelief> {
    let prepared = prepare_measurements(predicted, frame);
    ekf_update_prepared(predicted, frame, &prepared, pairs)
}

/// Everything one frame did to a belief.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// One belief, or several after a landing split.
    pub beliefs: Vec<StaircaseBelief>,
    pub matches: MatchResult,
}

pub fn filter_step(belief: &StaircaseBelief, frame: &MeasurementFrame) -> Result<Vec<StaircaseBelief>> {
    Ok(filter_step_with(belief, frame, &FilterConfig::default())?.beliefs)
}

pub fn filter_step_with(
    belief: &StaircaseBelief,
    frame: &MeasurementFrame,
    config: &FilterConfig,
) -> Result<StepOutcome> {
    frame.validate()?;
    let prepared = prepare_measurements(belief, frame);
    let matches = match_prepared(belief, &prepared, &config.association)?;
    let prediction = process_predict(belief, &matches, &frame.noise, config);
    let pairs = matches.resized_pairs(belief.len());
    let updated = ekf_update_prepared(&prediction.belief, frame, &prepared, &pairs)?;
    let mut next = update_endpoints_prepared(&updated, &prediction.belief, &prepared, &pairs);
    next.params = derive_params(&next.stairs)?;
    let splits = detect_landing(&next.stairs, config.landing_kappa, config.landing_floor);
    let beliefs = if splits.is_empty() { alloc::vec![next] } else { next.split_at(&splits) };
    Ok(StepOutcome { beliefs, matches })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{endpoints_to_local, initialize_belief, line_to_local};
    use crate::math::wrap;
    use crate::model::RobotPose;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};

    fn straight(n: usize) -> Vec<Stair> {
        (0..n)
            .map(|i| {
                let x = 1.0 + 0.28 * i as f64;
                let z = 0.17 * (i + 1) as f64;
                Stair::new(StairLine::new(x, 0.0, z, z), StairEndpoints::new([x, -0.5, z], [x, 0.5, z]))
            })
            .collect()
    }

    /// Circular-arc staircase around the origin-based arc geometry.
    fn curved(n: usize, dpsi: f64) -> Vec<Stair> {
        let (d, w, h) = (0.3, 1.2, 0.18);
        let mut c = [1.0, 0.4];
        let yaw0: f64 = 0.3;
        (0..n)
            .map(|i| {
                let yaw = yaw0 + i as f64 * dpsi;
                if i > 0 {
                    let mid = yaw - 0.5 * dpsi;
                    c[0] += d * libm::cos(mid);
                    c[1] += d * libm::sin(mid);
                }
                let z = h * (i + 1) as f64;
                let t = [-libm::sin(yaw), libm::cos(yaw)];
                let s = [c[0] - 0.5 * w * t[0], c[1] - 0.5 * w * t[1], z];
                let e = [c[0] + 0.5 * w * t[0], c[1] + 0.5 * w * t[1], z];
                Stair::from_endpoints(StairEndpoints::new(s, e)).unwrap()
            })
            .collect()
    }

    fn frame_of(stairs: &[Stair], pose: RobotPose, noise: NoiseConfig) -> MeasurementFrame {
        MeasurementFrame {
            lines: stairs.iter().map(|s| line_to_local(&s.line, &pose)).collect(),
            endpoints: stairs.iter().map(|s| endpoints_to_local(&s.endpoints, &pose)).collect(),
            pose,
            noise,
            timestamp: 0.0,
        }
    }

    fn belief_of(stairs: &[Stair], noise: NoiseConfig) -> StaircaseBelief {
        initialize_belief(&frame_of(stairs, RobotPose::new(-0.3, 0.1, 0.0, 0.05), noise)).unwrap()
    }

    #[test]
    fn consistent_state_is_a_prediction_fixed_point() {
        for stairs in [straight(6), curved(8, 0.09)] {
            let b = belief_of(&stairs, NoiseConfig::default());
            let p = process_predict(&b, &MatchResult::default(), &NoiseConfig::default(), &FilterConfig::default());
            for (a, t) in p.belief.stairs.iter().zip(&stairs) {
                assert!((a.line.r - t.line.r).abs() < 1e-9 && wrap(a.line.phi - t.line.phi).abs() < 1e-9);
                assert!(dist_xy(&a.endpoints.start, &t.endpoints.start) < 1e-9);
            }
        }
    }

    #[test]
    fn averaging_weights_sum_to_one_on_straight_stairs() {
        let b = belief_of(&straight(5), NoiseConfig::default());
        let p = process_predict(&b, &MatchResult::default(), &NoiseConfig::default(), &FilterConfig::default());
        for row in [0usize, 8, 16] {
            let blocks = (0..5).map(|c| p.f_x[(row, 4 * c)]).sum::<f64>();
            assert!((blocks - 1.0).abs() < 1e-12, "row {row}: {blocks}");
        }
        assert!((p.f_x[(8, 4)] - 1.0 / 3.0).abs() < 1e-12);
        assert!((p.f_x[(8, 8)] - 1.0 / 3.0).abs() < 1e-12);
        assert!((p.f_x[(8, 12)] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(p.f_x[(8, 16)], 0.0);
    }

    #[test]
    fn new_top_stair_equals_chain_prediction() {
        let t = straight(6);
        let b = belief_of(&t[..4], NoiseConfig::default());
        let m = MatchResult { new_succeeding: vec![crate::association::NewStair { offset: 1, measurement: 0 }], ..Default::default() };
        let p = process_predict(&b, &m, &NoiseConfig::default(), &FilterConfig::default());
        assert_eq!(p.belief.len(), 5);
        let chain = crate::predict::predict_chain(&b.stairs[3], &b.params, Direction::Next, 1, 4);
        assert_eq!(p.belief.stairs[4], chain[0]);
        assert!((p.belief.stairs[4].line.r - t[4].line.r).abs() < 1e-9);
    }

    fn fd_check(stairs: &[Stair], params: &StaircaseParams, below: usize, above: usize) {
        let n = stairs.len();
        let smooth = vec![true; n];
        let (base, f_x, f_s) = predict_state(stairs, params, below, above, &smooth);
        let h = 1e-6;
        let flat = |out: &[Stair], reference: &[Stair]| -> Vec<f64> {
            out.iter()
                .zip(reference)
                .flat_map(|(s, r)| {
                    let (l, _) = s.line.aligned_to(r.line.phi);
                    [l.r, wrap(l.phi - r.line.phi), l.z_start, l.z_end]
                })
                .collect()
        };
        for col in 0..4 * n {
            let mut plus = stairs.to_vec();
            let mut minus = stairs.to_vec();
            let bump = |s: &mut Stair, d: f64| {
                let mut v = s.line.to_vector();
                v[col % 4] += d;
                s.line = StairLine::from_vector(&v);
            };
            bump(&mut plus[col / 4], h);
            bump(&mut minus[col / 4], -h);
            let a = flat(&predict_state(&plus, params, below, above, &smooth).0, &base);
            let b = flat(&predict_state(&minus, params, below, above, &smooth).0, &base);
            for row in 0..a.len() {
                let fd = (a[row] - b[row]) / (2.0 * h);
                let an = f_x[(row, col)];
                assert!((fd - an).abs() <= 1e-4 * (1.0 + an.abs()), "F_X[{row},{col}] {an} vs {fd}");
            }
        }
        for col in 0..6 {
            let mut pp = params.to_array();
            let mut pm = params.to_array();
            pp[col] += h;
            pm[col] -= h;
            let a = flat(&predict_state(stairs, &StaircaseParams::from_array(pp), below, above, &smooth).0, &base);
            let b = flat(&predict_state(stairs, &StaircaseParams::from_array(pm), below, above, &smooth).0, &base);
            for row in 0..a.len() {
                let fd = (a[row] - b[row]) / (2.0 * h);
                let an = f_s[(row, col)];
                assert!((fd - an).abs() <= 1e-4 * (1.0 + an.abs()), "F_S[{row},{col}] {an} vs {fd}");
            }
        }
    }

    #[test]
    fn process_jacobians_match_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for k in 0..10 {
            let mut stairs = curved(4 + k % 3, rng.random_range(-0.15..0.15));
            for s in stairs.iter_mut() {
                s.line.r += rng.random_range(-0.02..0.02);
                s.line.phi += rng.random_range(-0.02..0.02);
            }
            let params = derive_params(&stairs).unwrap();
            fd_check(&stairs, &params, k % 3, (k + 1) % 3);
        }
    }

    #[test]
    fn zero_innovation_shrinks_covariance_only() {
        let t = straight(4);
        let noise = NoiseConfig::default();
        let b = belief_of(&t, noise);
        let frame = frame_of(&t, RobotPose::identity(), noise);
        let pairs = [(1usize, 1usize)];
        let u = ekf_update(&b, &frame, &pairs).unwrap();
        for (a, s) in u.stairs.iter().zip(&b.stairs) {
            assert!((a.line.r - s.line.r).abs() < 1e-12);
        }
        assert!(u.line_covariance(1).trace() < b.line_covariance(1).trace());
    }

    #[test]
    fn scalar_kalman_identity() {
        let mut noise = NoiseConfig::uniform(0.0);
        noise.measurement.r = 0.1;
        noise.measurement.phi = 1e-9;
        noise.measurement.z_start = 1e-9;
        noise.measurement.z_end = 1e-9;
        let t = straight(2);
        let mut b = belief_of(&t, noise);
        b.covariance = DMatrix::zeros(8, 8);
        b.covariance[(0, 0)] = 0.01;
        for k in 1..8 {
            b.covariance[(k, k)] = 1e-18;
        }
        let mut moved = t.clone();
        moved[0].line.r += 0.2;
        let frame = frame_of(&moved, RobotPose::identity(), noise);
        let u = ekf_update(&b, &frame, &[(0, 0)]).unwrap();
        assert!((u.covariance[(0, 0)] - 0.005).abs() < 1e-12);
        assert!((u.stairs[0].line.r - (t[0].line.r + 0.1)).abs() < 1e-9);
    }

    #[test]
    fn endpoints_grow_by_the_measured_extension() {
        let t = straight(4);
        let noise = NoiseConfig::default();
        let b = belief_of(&t, noise);
        let mut wider = t.clone();
        wider[2].endpoints.end[1] += 0.3;
        let frame = frame_of(&wider, RobotPose::identity(), noise);
        let out = update_endpoints(&b, &b, &frame, &[(2, 2)]);
        assert!((out.stairs[2].endpoints.span_xy() - 1.3).abs() < 1e-12);
        let inner = {
            let mut s = t.clone();
            s[1].endpoints.start[1] += 0.2;
            s[1].endpoints.end[1] -= 0.2;
            s
        };
        let out = update_endpoints(&b, &b, &frame_of(&inner, RobotPose::identity(), noise), &[(1, 1)]);
        assert!(dist_xy(&out.stairs[1].endpoints.start, &b.stairs[1].endpoints.start) < 1e-12);
        assert!(dist_xy(&out.stairs[1].endpoints.end, &b.stairs[1].endpoints.end) < 1e-12);
        for s in &out.stairs {
            assert!(s.line.signed_distance_xy(&s.endpoints.start).abs() < 1e-9);
            assert!(s.line.signed_distance_xy(&s.endpoints.end).abs() < 1e-9);
        }
    }

    #[test]
    fn noise_free_filter_step_is_a_fixed_point() {
        let noise = NoiseConfig::uniform(1e-6);
        for t in [straight(6), curved(10, 0.08)] {
            let b = belief_of(&t, noise);
            let frame = frame_of(&t[2..5], RobotPose::new(0.2, 0.0, 0.0, 0.1), noise);
            let out = filter_step(&b, &frame).unwrap();
            assert_eq!(out.len(), 1);
            for (a, s) in out[0].stairs.iter().zip(&t) {
                assert!((a.line.r - s.line.r).abs() < 1e-6 && wrap(a.line.phi - s.line.phi).abs() < 1e-6);
                assert!(dist_xy(&a.endpoints.start, &s.endpoints.start) < 1e-6);
            }
        }
    }

    #[test]
    fn noisy_sequence_stays_psd_and_beats_single_frames() {
        let noise = NoiseConfig::default();
        let t = straight(8);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let g = Normal::new(0.0, 1.0).unwrap();
        let mut noisy = |stairs: &[Stair]| {
            let pose = RobotPose::new(-0.5, 0.0, 0.0, 0.0);
            let mut f = frame_of(stairs, pose, noise);
            for l in f.lines.iter_mut() {
                l.r += 0.03 * g.sample(&mut rng);
                l.phi += 0.035 * g.sample(&mut rng);
                let dz = 0.02 * g.sample(&mut rng);
                l.z_start += dz;
                l.z_end += dz;
            }
            f
        };
        let mut belief = initialize_belief(&noisy(&t)).unwrap();
        for _ in 0..20 {
            belief = filter_step(&belief, &noisy(&t)).unwrap().remove(0);
            let ev = belief.covariance.clone().symmetric_eigen().eigenvalues;
            assert!(ev.min() > -1e-9);
        }
        assert_eq!(belief.len(), 8);
        let err = belief.params.height - 0.17;
        assert!(err.abs() < 0.005, "{err}");
    }

    #[test]
    fn landing_splits_the_belief() {
        let mut t = straight(4);
        for k in 0..4 {
            let x = 1.0 + 0.84 + 1.5 + 0.28 * k as f64;
            let z = 0.17 * (k + 5) as f64;
            t.push(Stair::new(StairLine::new(x, 0.0, z, z), StairEndpoints::new([x, -0.5, z], [x, 0.5, z])));
        }
        let noise = NoiseConfig::uniform(1e-4);
        let b = initialize_belief(&frame_of(&t, RobotPose::identity(), noise)).unwrap();
        let out = filter_step(&b, &frame_of(&t, RobotPose::identity(), noise)).unwrap();
        assert_eq!(out.iter().map(|b| b.len()).collect::<Vec<_>>(), vec![4, 4]);
    }
}
