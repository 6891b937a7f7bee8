// SPDX-License-Identifier: Apache-2.0

//! Detector emulation: which stair edges a pose can see, and how they are
//! reported.

use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::Matrix4;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::cloud::{place, Placed};
use super::{Clutter, DetectorSpec, Occluder, TrueStaircase, View};
use crate::frames::{line_to_local, point_to_local};
use crate::math::{cos, hypot, sin, sin_cos, unit};
use crate::model::{MeasurementFrame, NoiseConfig, RobotPose, StairEndpoints, StairLine};

const EDGE_SAMPLES: usize = 20;

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Restricts `[lo, hi]` to `t` with `c0 + c1 t >= 0`.
fn clip_linear(lo: &mut f64, hi: &mut f64, c0: f64, c1: f64) {
    if c1.abs() < 1e-15 {
        if c0 < 0.0 {
            *hi = *lo - 1.0;
        }
        return;
    }
    let t = -c0 / c1;
    if c1 > 0.0 {
        *lo = lo.max(t);
    } else {
        *hi = hi.min(t);
    }
}

/// Parameter interval of the local segment `a + t (b - a)` inside the
/// field of view, if any.
fn clip_to_fov(a: [f64; 2], b: [f64; 2], range: f64, half_angle: f64) -> Option<(f64, f64)> {
    let d = [b[0] - a[0], b[1] - a[1]];
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    if range.is_finite() {
        // |a + t d|^2 <= R^2
        let qa = d[0] * d[0] + d[1] * d[1];
        let qb = 2.0 * (a[0] * d[0] + a[1] * d[1]);
        let qc = a[0] * a[0] + a[1] * a[1] - range * range;
        let disc = qb * qb - 4.0 * qa * qc;
        if qa < 1e-18 || disc < 0.0 {
            return None;
        }
        let s = libm::sqrt(disc);
        lo = lo.max((-qb - s) / (2.0 * qa));
        hi = hi.min((-qb + s) / (2.0 * qa));
    }
    if half_angle >= PI {
        return (hi > lo).then_some((lo, hi));
    }
    // wedge |bearing| <= half_angle as two half-planes
    let lower = unit(-half_angle);
    let upper = unit(half_angle);
    clip_linear(&mut lo, &mut hi, cross(lower, a), cross(lower, d));
    clip_linear(&mut lo, &mut hi, cross(a, upper), cross(d, upper));
    (hi > lo).then_some((lo, hi))
}

/// Whether the segment `p -> q` passes through the oriented box.
pub fn segment_hits_box(p: &[f64; 3], q: &[f64; 3], b: &Occluder) -> bool {
    let (s, c) = sin_cos(b.yaw);
    let to_box = |v: &[f64; 3]| {
        let d = [v[0] - b.center[0], v[1] - b.center[1], v[2] - b.center[2]];
        [c * d[0] + s * d[1], -s * d[0] + c * d[1], d[2]]
    };
    let a = to_box(p);
    let e = to_box(q);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for k in 0..3 {
        let d = e[k] - a[k];
        let h = b.half_extents[k];
        if d.abs() < 1e-15 {
            if a[k].abs() > h {
                return false;
            }
            continue;
        }
        let t0 = (-h - a[k]) / d;
        let t1 = (h - a[k]) / d;
        let (t0, t1) = if t0 < t1 { (t0, t1) } else { (t1, t0) };
        lo = lo.max(t0);
        hi = hi.min(t1);
        if lo > hi {
            return false;
        }
    }
    true
}

fn lerp(a: &[f64; 3], b: &[f64; 3], t: f64) -> [f64; 3] {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])]
}

/// Visible parameter interval of a world edge, after the field of view and
/// the occluders.
fn visible_interval(
    ends: &StairEndpoints,
    view: &View,
    detector: &DetectorSpec,
    occluders: &[Occluder],
) -> Option<(f64, f64)> {
    let la = point_to_local(&ends.start, &view.pose);
    let lb = point_to_local(&ends.end, &view.pose);
    let (lo, hi) = clip_to_fov([la[0], la[1]], [lb[0], lb[1]], view.fov.max_range, view.fov.half_angle)?;
    let sensor = [view.pose.position[0], view.pose.position[1], view.pose.position[2] + view.fov.sensor_height];
    let samples: Vec<f64> = (0..EDGE_SAMPLES).map(|k| lo + (hi - lo) * (k as f64 + 0.5) / EDGE_SAMPLES as f64).collect();
    let open: Vec<bool> = samples
        .iter()
        .map(|&t| {
            let p = lerp(&ends.start, &ends.end, t);
            !occluders.iter().any(|o| segment_hits_box(&sensor, &p, o))
        })
        .collect();
    let visible = open.iter().filter(|v| **v).count();
    if (visible as f64) < detector.visibility_threshold * EDGE_SAMPLES as f64 {
        return None;
    }
    if visible == EDGE_SAMPLES {
        return Some((lo, hi));
    }
    // shrink to the unblocked run of samples
    let first = open.iter().position(|v| *v)?;
    let last = open.iter().rposition(|v| *v)?;
    let step = (hi - lo) / EDGE_SAMPLES as f64;
    Some((if first == 0 { lo } else { samples[first] - 0.5 * step }, if last + 1 == EDGE_SAMPLES { hi } else { samples[last] + 0.5 * step }))
}

fn pose_noise(noise: &NoiseConfig, rng: &mut ChaCha8Rng) -> [f64; 4] {
    let cov = noise.pose_covariance_matrix();
    let l = match nalgebra::Cholesky::new(cov) {
        Some(c) => c.l(),
        None => {
            let e = cov.symmetric_eigen();
            let sq = Matrix4::from_diagonal(&e.eigenvalues.map(|v| libm::sqrt(v.max(0.0))));
            e.eigenvectors * sq
        }
    };
    let z = nalgebra::Vector4::new(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
    let d = l * z;
    [d[0], d[1], d[2], d[3]]
}

/// Blockers and clutter of a scene. Clutter objects also block sightlines.
#[derive(Debug, Clone, Copy, Default)]
pub struct Obstacles<'a> {
    pub occluders: &'a [Occluder],
    pub clutter: &'a [Clutter],
}

#[derive(Default)]
struct Detections {
    lines: Vec<StairLine>,
    endpoints: Vec<StairEndpoints>,
    corr: Vec<Option<usize>>,
}

impl Detections {
    fn push(&mut self, (line, ends): (StairLine, StairEndpoints), corr: Option<usize>) {
        self.lines.push(line);
        self.endpoints.push(ends);
        self.corr.push(corr);
    }
}

/// Noisy local detection of the visible part of one world edge.
fn detect_edge(
    line: &StairLine,
    ends: &StairEndpoints,
    view: &View,
    noise: &NoiseConfig,
    detector: &DetectorSpec,
    blockers: &[Occluder],
    rng: &mut ChaCha8Rng,
) -> Option<(StairLine, StairEndpoints)> {
    let m = &noise.measurement;
    let pose = view.pose;
    let (lo, hi) = visible_interval(ends, view, detector, blockers)?;
    if ends.span_xy() * (hi - lo) < detector.min_visible_length {
        return None;
    }
    let a = point_to_local(&lerp(&ends.start, &ends.end, lo), &pose);
    let b = point_to_local(&lerp(&ends.start, &ends.end, hi), &pose);
    let exact = line_to_local(line, &pose);
    let noisy = StairLine::new(
        exact.r + m.r * gauss(rng),
        exact.phi + m.phi * gauss(rng),
        exact.z_start + m.z_start * gauss(rng),
        exact.z_end + m.z_end * gauss(rng),
    );
    let t = noisy.direction();
    let mut put = |p: &[f64; 3], z: f64| {
        let q = noisy.project_xy(p);
        let j = detector.endpoint_sigma * gauss(rng);
        [q[0] + j * t[0], q[1] + j * t[1], z]
    };
    let s = put(&a, noisy.z_start);
    let e = put(&b, noisy.z_end);
    Some((noisy, StairEndpoints::new(s, e)))
}

/// Renders one detector frame. Lines and endpoints are expressed relative
/// to the true pose; the frame reports a pose perturbed by the pose
/// covariance, so world-frame errors follow the same model the filter uses.
pub fn render_frame(
    truth: &TrueStaircase,
    view: &View,
    noise: &NoiseConfig,
    detector: &DetectorSpec,
    scene: &Obstacles,
    rng: &mut ChaCha8Rng,
) -> (MeasurementFrame, Vec<Option<usize>>) {
    let pose = view.pose;
    let placed: Vec<Placed> = scene.clutter.iter().map(|c| place(truth, c)).collect();
    let mut blockers = scene.occluders.to_vec();
    blockers.extend(placed.iter().map(Placed::occluder));
    let mut out = Detections::default();
    for (i, stair) in truth.stairs.iter().enumerate() {
        if let Some(d) = detect_edge(&stair.line, &stair.endpoints, view, noise, detector, &blockers, rng) {
            out.push(d, Some(i));
        }
    }
    if detector.clutter_edge_rate > 0.0 {
        for (k, p) in placed.iter().enumerate() {
            let ends = p.front_edge();
            let Ok(line) = StairLine::through(&ends.start, &ends.end) else { continue };
            // an object does not hide its own front edge
            let others: Vec<Occluder> = blockers.iter().enumerate().filter(|(j, _)| *j != scene.occluders.len() + k).map(|(_, o)| *o).collect();
            let seen = detect_edge(&line, &ends, view, noise, detector, &others, rng);
            if let Some(d) = seen {
                if rng.random_bool(detector.clutter_edge_rate) {
                    out.push(d, None);
                }
            }
        }
    }
    if detector.false_line_rate > 0.0 && rng.random_bool(detector.false_line_rate) {
        out.push(spurious_line(truth, view, rng), None);
    }
    // frames list their lines by elevation
    let mut order: Vec<usize> = (0..out.lines.len()).collect();
    order.sort_by(|&a, &b| out.lines[a].mean_z().total_cmp(&out.lines[b].mean_z()));
    let lines = order.iter().map(|&k| out.lines[k]).collect();
    let endpoints = order.iter().map(|&k| out.endpoints[k]).collect();
    let corr = order.iter().map(|&k| out.corr[k]).collect();
    let d = pose_noise(noise, rng);
    let reported = RobotPose::new(pose.position[0] + d[0], pose.position[1] + d[1], pose.position[2] + d[2], pose.yaw + d[3]);
    (MeasurementFrame { lines, endpoints, pose: reported, noise: *noise, timestamp: 0.0 }, corr)
}

/// A clutter-like line somewhere in view at a random elevation within the
/// flight.
fn spurious_line(truth: &TrueStaircase, view: &View, rng: &mut ChaCha8Rng) -> (StairLine, StairEndpoints) {
    let range = view.fov.max_range.min(6.0);
    let bearing = rng.random_range(-view.fov.half_angle..view.fov.half_angle);
    let dist = rng.random_range(0.5..range.max(0.6));
    let c = [dist * cos(bearing), dist * sin(bearing)];
    let yaw = rng.random_range(-core::f64::consts::PI..core::f64::consts::PI);
    let len = rng.random_range(0.4..1.2);
    let zmin = truth.stairs.first().map_or(0.0, |s| s.elevation());
    let zmax = truth.stairs.last().map_or(1.0, |s| s.elevation());
    let z = rng.random_range(zmin..zmax.max(zmin + 1e-3)) - view.pose.position[2];
    let dir = unit(yaw);
    let s = [c[0] - 0.5 * len * dir[0], c[1] - 0.5 * len * dir[1], z];
    let e = [c[0] + 0.5 * len * dir[0], c[1] + 0.5 * len * dir[1], z];
    let line = StairLine::through(&s, &e).unwrap_or(StairLine::new(hypot(c[0], c[1]), bearing, z, z));
    (line, StairEndpoints::new(s, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{endpoints_to_local, initialize_belief};
    use crate::sim::{build_staircase, FieldOfView, StaircaseSpec};
    use core::f64::consts::FRAC_PI_2;
    use rand::SeedableRng;

    fn truth() -> TrueStaircase {
        build_staircase(&StaircaseSpec {
            steps: 10,
            height: 0.17,
            depth: 0.28,
            width: 1.2,
            start_yaw: 0.0,
            curvature: 0.0,
            origin: [2.0, 0.0, 0.0],
            landings: alloc::vec![],
        })
        .unwrap()
    }

    fn exact() -> DetectorSpec {
        DetectorSpec { endpoint_sigma: 0.0, ..DetectorSpec::default() }
    }

    #[test]
    fn unlimited_noise_free_view_is_exact() {
        let t = truth();
        let view = View { pose: RobotPose::new(0.3, 0.2, 0.0, 0.1), fov: FieldOfView::unlimited() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (f, c) = render_frame(&t, &view, &NoiseConfig::uniform(0.0), &exact(), &Obstacles::default(), &mut rng);
        assert_eq!(c.len(), 10);
        for (k, s) in t.stairs.iter().enumerate() {
            let l = line_to_local(&s.line, &view.pose);
            assert!((f.lines[k].r - l.r).abs() < 1e-12 && (f.lines[k].phi - l.phi).abs() < 1e-12);
            let e = endpoints_to_local(&s.endpoints, &view.pose);
            for j in 0..3 {
                assert!((f.endpoints[k].start[j] - e.start[j]).abs() < 1e-9);
            }
        }
        let b = initialize_belief(&f).unwrap();
        for (a, s) in b.stairs.iter().zip(&t.stairs) {
            assert!((a.line.r - s.line.r).abs() < 1e-9 && crate::math::dist_xy(&a.endpoints.end, &s.endpoints.end) < 1e-9);
        }
    }

    #[test]
    fn range_and_angle_truncate_edges() {
        let t = truth();
        let view = View { pose: RobotPose::identity(), fov: FieldOfView { max_range: 3.0, half_angle: 0.25, sensor_height: 0.0 } };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (f, c) = render_frame(&t, &view, &NoiseConfig::uniform(0.0), &exact(), &Obstacles::default(), &mut rng);
        // stairs beyond 3 m are cut or dropped
        assert!(c.len() < 10 && c.iter().all(|s| t.stairs[s.unwrap()].line.r < 3.0));
        for e in &f.endpoints {
            for p in [e.start, e.end] {
                assert!(hypot(p[0], p[1]) <= 3.0 + 1e-9);
                assert!(libm::atan2(p[1], p[0]).abs() <= 0.25 + 1e-9);
            }
        }
    }

    #[test]
    fn occluder_hides_the_middle_stairs() {
        let t = truth();
        // block the edges of stairs 4 to 6 (indices 3..=5)
        let x0 = t.stairs[3].line.r - 0.05;
        let x1 = t.stairs[5].line.r + 0.05;
        let occ = Occluder { center: [0.5 * (x0 + x1), 0.0, 0.8], half_extents: [0.5 * (x1 - x0), 1.0, 0.8], yaw: 0.0 };
        let view = View { pose: RobotPose::identity(), fov: FieldOfView { max_range: 10.0, half_angle: FRAC_PI_2, sensor_height: 0.5 } };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (_, c) = render_frame(&t, &view, &NoiseConfig::uniform(0.0), &exact(), &Obstacles { occluders: &[occ], clutter: &[] }, &mut rng);
        let seen: Vec<usize> = c.iter().map(|s| s.unwrap()).collect();
        assert!(!seen.contains(&3) && !seen.contains(&4) && !seen.contains(&5));
        assert!(seen.contains(&0) && seen.contains(&2));
    }

    #[test]
    fn box_intersection_cases() {
        let b = Occluder { center: [0.0, 0.0, 0.0], half_extents: [1.0, 1.0, 1.0], yaw: 0.7 };
        assert!(segment_hits_box(&[-3.0, 0.0, 0.0], &[3.0, 0.0, 0.0], &b));
        assert!(!segment_hits_box(&[-3.0, 0.0, 2.0], &[3.0, 0.0, 2.0], &b));
        assert!(!segment_hits_box(&[-3.0, 0.0, 0.0], &[-2.0, 0.0, 0.0], &b));
    }

    #[test]
    fn measured_noise_matches_the_configuration() {
        let t = truth();
        let view = View { pose: RobotPose::identity(), fov: FieldOfView::unlimited() };
        let noise = NoiseConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut residuals = Vec::new();
        while residuals.len() < 10_000 {
            let (f, c) = render_frame(&t, &view, &noise, &exact(), &Obstacles::default(), &mut rng);
            for (l, s) in f.lines.iter().zip(&c) {
                residuals.push(l.r - t.stairs[s.unwrap()].line.r);
            }
        }
        let n = residuals.len() as f64;
        let mean = residuals.iter().sum::<f64>() / n;
        let sd = libm::sqrt(residuals.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0));
        assert!((sd / noise.measurement.r - 1.0).abs() < 0.05, "{sd}");
    }

    #[test]
    fn rendering_is_deterministic() {
        let t = truth();
        let view = View { pose: RobotPose::new(0.0, 0.0, 0.0, 0.05), fov: FieldOfView { max_range: 4.0, half_angle: 0.8, sensor_height: 0.4 } };
        let det = DetectorSpec { false_line_rate: 0.5, ..DetectorSpec::default() };
        let a = render_frame(&t, &view, &NoiseConfig::default(), &det, &Obstacles::default(), &mut ChaCha8Rng::seed_from_u64(9));
        let b = render_frame(&t, &view, &NoiseConfig::default(), &det, &Obstacles::default(), &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn clutter_front_edges_are_reported_and_block_views() {
        use crate::sim::{Clutter, ClutterShape};
        let t = truth();
        let boxed = [Clutter { shape: ClutterShape::Box { size: [0.18, 0.4, 0.2] }, stair: 2, along: 0.4, into: 0.14, yaw: 0.0 }];
        let view = View { pose: RobotPose::identity(), fov: FieldOfView::unlimited() };
        let det = DetectorSpec { clutter_edge_rate: 1.0, ..exact() };
        let scene = Obstacles { occluders: &[], clutter: &boxed };
        let (f, c) = render_frame(&t, &view, &NoiseConfig::uniform(0.0), &det, &scene, &mut ChaCha8Rng::seed_from_u64(5));
        let k = c.iter().position(|s| s.is_none()).expect("clutter edge");
        // front face sits 5 cm behind the edge of stair 3, its top 20 cm up
        assert!((f.lines[k].r - (t.stairs[2].line.r + 0.05)).abs() < 1e-9);
        assert!((f.lines[k].mean_z() - (t.stairs[2].elevation() + 0.2)).abs() < 1e-9);
        assert!((f.endpoints[k].span_xy() - 0.4).abs() < 1e-9);
        // sorted by elevation, and the object hides part of stair 4
        assert!(f.lines.windows(2).all(|w| w[0].mean_z() <= w[1].mean_z()));
        let j = c.iter().position(|s| *s == Some(3)).expect("stair 4 partly visible");
        assert!(f.endpoints[j].span_xy() < t.params.width - 0.1);
    }

    #[test]
    fn all_round_sensor_sees_behind() {
        let t = truth();
        let mid = t.stairs[5].endpoints.center_xy();
        let pose = RobotPose::new(mid[0] + 0.1, mid[1], t.stairs[5].elevation(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let wedge = View { pose, fov: FieldOfView { max_range: 10.0, half_angle: FRAC_PI_2, sensor_height: 0.5 } };
        let (_, front) = render_frame(&t, &wedge, &NoiseConfig::uniform(0.0), &exact(), &Obstacles::default(), &mut rng);
        let omni = View { pose, fov: FieldOfView::omnidirectional(10.0, 0.5) };
        let (_, all) = render_frame(&t, &omni, &NoiseConfig::uniform(0.0), &exact(), &Obstacles::default(), &mut rng);
        assert!(!front.contains(&Some(0)));
        assert_eq!(all.len(), 10);
    }
}
