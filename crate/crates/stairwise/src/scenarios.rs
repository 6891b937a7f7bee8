// SPDX-License-Identifier: Apache-2.0

//! Built-in scenarios: the default evaluation suite, the occlusion and
//! landing cases, cluttered segmentation clouds and benchmark inputs.

use std::f64::consts::{FRAC_PI_2, PI};

use stairwise_core::math::{to_radians, unit, wrap};
use stairwise_core::sim::{
    build_staircase, Clutter, ClutterShape, DetectorSpec, FieldOfView, Landing, Occluder, ScenarioSpec, StaircaseSpec,
    TrueStaircase, View, SCHEMA_VERSION,
};
use stairwise_core::{NoiseConfig, RobotPose};

/// Spinning lidar on the robot body, as used for the evaluation runs.
pub fn lidar_fov() -> FieldOfView {
    FieldOfView::omnidirectional(4.0, 0.6)
}

/// Seeds of the default suite.
pub const SEEDS_PER_SCENARIO: u64 = 10;

/// Head-mounted depth camera on a legged robot.
pub fn robot_fov() -> FieldOfView {
    FieldOfView { max_range: 4.0, half_angle: to_radians(45.0), sensor_height: 0.5 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Walk {
    Ascend,
    Descend,
}

#[derive(Debug, Clone, Copy)]
pub struct PathSpec {
    pub walk: Walk,
    pub frames: usize,
    /// Distance walked before the first edge (or past the top edge).
    pub run_up: f64,
    /// Fraction of the flight climbed (or descended).
    pub coverage: f64,
    /// Lateral offset from the centreline: start and end value (m).
    pub lateral: (f64, f64),
    /// Amplitude of the heading wobble (rad).
    pub wobble: f64,
    pub fov: FieldOfView,
}

impl PathSpec {
    pub fn ascend(frames: usize) -> Self {
        Self {
            walk: Walk::Ascend,
            frames,
            run_up: 2.5,
            coverage: 0.8,
            lateral: (0.0, 0.0),
            wobble: to_radians(5.0),
            fov: robot_fov(),
        }
    }
}

/// Robot pose at arc length `s` along the centreline, offset sideways by
/// `lateral`. Negative `s` lies before the first edge, values past the last
/// edge continue straight on the top.
fn centreline(truth: &TrueStaircase, s: f64, lateral: f64) -> ([f64; 3], f64) {
    let stairs = &truth.stairs;
    let n = stairs.len();
    let d = truth.params.depth;
    let ground = stairs[0].elevation() - truth.params.height;
    let (c, yaw, z) = if s < 0.0 {
        let c = stairs[0].endpoints.center_xy();
        let u = unit(truth.yaw(0));
        ([c[0] + s * u[0], c[1] + s * u[1]], truth.yaw(0), ground)
    } else if s >= (n - 1) as f64 * d {
        let c = stairs[n - 1].endpoints.center_xy();
        let u = unit(truth.yaw(n - 1));
        let e = s - (n - 1) as f64 * d;
        ([c[0] + e * u[0], c[1] + e * u[1]], truth.yaw(n - 1), stairs[n - 1].elevation())
    } else {
        let k = ((s / d).floor() as usize).min(n - 2);
        let f = s / d - k as f64;
        let a = stairs[k].endpoints.center_xy();
        let b = stairs[k + 1].endpoints.center_xy();
        let yaw = truth.yaw(k) + f * truth.params.curvature;
        ([a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])], yaw, stairs[k].elevation())
    };
    let t = unit(yaw + FRAC_PI_2);
    ([c[0] + lateral * t[0], c[1] + lateral * t[1], z], yaw)
}

pub fn trajectory(truth: &TrueStaircase, path: &PathSpec) -> Vec<View> {
    let n = truth.stairs.len();
    let flight = (n - 1) as f64 * truth.params.depth;
    let (from, to) = match path.walk {
        Walk::Ascend => (-path.run_up, path.coverage * flight),
        Walk::Descend => (flight + path.run_up, (1.0 - path.coverage) * flight),
    };
    let k = path.frames.max(2);
    (0..k)
        .map(|i| {
            let f = i as f64 / (k - 1) as f64;
            let s = from + f * (to - from);
            let lat = path.lateral.0 + f * (path.lateral.1 - path.lateral.0);
            let (p, yaw) = centreline(truth, s, lat);
            let facing = if path.walk == Walk::Descend { yaw + PI } else { yaw };
            let heading = wrap(facing + path.wobble * (2.0 * PI * 1.5 * f).sin());
            View { pose: RobotPose::new(p[0], p[1], p[2], heading), fov: path.fov }
        })
        .collect()
}

pub fn staircase(steps: usize, height: f64, depth: f64, width: f64, curvature_deg: f64) -> StaircaseSpec {
    StaircaseSpec {
        steps,
        height,
        depth,
        width,
        start_yaw: 0.0,
        curvature: to_radians(curvature_deg),
        origin: [0.0, 0.0, 0.0],
        landings: Vec::new(),
    }
}

/// Assembles a scenario; the staircase must be valid.
pub fn scenario(name: &str, stairs: StaircaseSpec, path: &PathSpec, seed: u64) -> ScenarioSpec {
    let truth = build_staircase(&stairs).expect("built-in staircase is valid");
    ScenarioSpec {
        schema_version: SCHEMA_VERSION,
        name: name.to_string(),
        trajectory: trajectory(&truth, path),
        staircase: stairs,
        noise: NoiseConfig::default(),
        detector: DetectorSpec::default(),
        clutter: Vec::new(),
        occluders: Vec::new(),
        point_density: 800.0,
        cloud_noise: 0.005,
        seed,
    }
}

/// A few objects spread over the treads.
pub fn scatter_clutter(spec: &StaircaseSpec, count: usize) -> Vec<Clutter> {
    (0..count)
        .map(|k| {
            let stair = (1 + k * 3) % spec.steps;
            let side = if k % 2 == 0 { -0.25 } else { 0.25 };
            let shape = match k % 3 {
                0 => ClutterShape::Box { size: [0.25, 0.18, 0.2] },
                1 => ClutterShape::Cylinder { radius: 0.08, height: 0.3 },
                _ => ClutterShape::Box { size: [0.35, 0.12, 0.12] },
            };
            Clutter { shape, stair, along: side * spec.width, into: 0.5 * spec.depth, yaw: 0.3 * k as f64 }
        })
        .collect()
}

struct Entry {
    name: &'static str,
    steps: usize,
    height: f64,
    depth: f64,
    width: f64,
    curvature_deg: f64,
    walk: Walk,
    clutter: usize,
    false_rate: f64,
    sweep: bool,
}

const fn entry(name: &'static str, steps: usize, height: f64, depth: f64, width: f64, curvature_deg: f64) -> Entry {
    Entry { name, steps, height, depth, width, curvature_deg, walk: Walk::Ascend, clutter: 0, false_rate: 0.0, sweep: false }
}

const fn cluttered(e: Entry, clutter: usize) -> Entry {
    Entry { clutter, false_rate: 0.3, ..e }
}

const SUITE: [Entry; 20] = [
    entry("straight_4", 4, 0.18, 0.28, 1.0, 0.0),
    cluttered(entry("straight_6", 6, 0.17, 0.29, 1.2, 0.0), 2),
    cluttered(entry("straight_10", 10, 0.17, 0.28, 1.5, 0.0), 3),
    cluttered(entry("straight_15", 15, 0.16, 0.30, 2.0, 0.0), 4),
    entry("straight_20", 20, 0.17, 0.27, 1.2, 0.0),
    Entry { sweep: true, ..entry("wide_5m", 8, 0.15, 0.32, 5.0, 0.0) },
    Entry { sweep: true, ..entry("wide_10m", 6, 0.15, 0.33, 10.0, 0.0) },
    cluttered(entry("grand_20", 20, 0.16, 0.30, 3.0, 0.0), 5),
    cluttered(entry("curved_left_3", 10, 0.18, 0.28, 1.2, 3.0), 3),
    cluttered(entry("curved_right_5", 12, 0.17, 0.28, 1.5, -5.0), 3),
    entry("spiral_10", 16, 0.19, 0.30, 1.0, 10.0),
    cluttered(entry("curved_wide_4", 10, 0.16, 0.32, 3.0, 4.0), 4),
    entry("curved_20", 20, 0.17, 0.28, 1.4, -6.0),
    entry("steep_5", 5, 0.21, 0.25, 1.0, 0.0),
    cluttered(entry("shallow_14", 14, 0.13, 0.35, 2.0, 0.0), 4),
    cluttered(entry("cluttered_straight", 8, 0.17, 0.28, 1.5, 0.0), 5),
    cluttered(entry("cluttered_curved", 10, 0.17, 0.29, 1.5, 5.0), 5),
    Entry { walk: Walk::Descend, ..entry("descend_straight", 10, 0.17, 0.28, 1.2, 0.0) },
    cluttered(Entry { walk: Walk::Descend, ..entry("descend_curved", 12, 0.17, 0.28, 1.5, -4.0) }, 3),
    Entry { sweep: true, ..entry("wide_sweep_8m", 8, 0.17, 0.30, 8.0, 0.0) },
];

/// Chance per frame that a visible object's front top edge is reported as
/// a stair line in the cluttered scenarios.
pub const CLUTTER_EDGE_RATE: f64 = 0.5;

/// Deterministic per-run seed from the suite seed, scenario and repetition.
pub fn run_seed(base: u64, scenario: usize, rep: u64) -> u64 {
    let mut x = base ^ 0x243f_6a88_85a3_08d3;
    for v in [scenario as u64, rep] {
        x = (x ^ v).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        x ^= x >> 31;
    }
    x
}

/// The twenty scenarios of the default suite; `seed` is left at zero and set
/// per run.
pub fn default_suite() -> Vec<ScenarioSpec> {
    SUITE
        .iter()
        .map(|e| {
            let mut stairs = staircase(e.steps, e.height, e.depth, e.width, e.curvature_deg);
            stairs.start_yaw = to_radians(20.0);
            stairs.origin = [1.0, -0.5, 0.0];
            let frames = (2 * e.steps).clamp(16, 32);
            let mut path = PathSpec { walk: e.walk, coverage: 1.0, fov: lidar_fov(), ..PathSpec::ascend(frames) };
            if e.sweep {
                let a = e.width / 3.0;
                path.lateral = (-a, a);
            } else {
                path.lateral = (-0.1 * e.width, 0.1 * e.width);
            }
            let mut s = scenario(e.name, stairs, &path, 0);
            s.clutter = scatter_clutter(&s.staircase, e.clutter);
            s.detector.false_line_rate = e.false_rate;
            if e.clutter > 0 {
                s.detector.clutter_edge_rate = CLUTTER_EDGE_RATE;
            }
            s
        })
        .collect()
}

/// Ten stairs whose 4th to 6th edges are draped by thin covers, so no pose
/// ever observes them. The robot approaches from 3 m and first sees only
/// the lower stairs, the upper ones come into range later.
pub fn occlusion_scenario(seed: u64) -> ScenarioSpec {
    let stairs = staircase(10, 0.17, 0.28, 1.2, 0.0);
    let truth = build_staircase(&stairs).expect("valid");
    let mut path = PathSpec::ascend(24);
    path.run_up = 3.0;
    path.coverage = 0.0;
    path.wobble = to_radians(3.0);
    let mut s = scenario("occlusion", stairs, &path, seed);
    for st in &truth.stairs[3..6] {
        let c = st.endpoints.center_xy();
        s.occluders.push(Occluder {
            center: [c[0], c[1], st.elevation()],
            half_extents: [0.03, 0.5 * truth.params.width + 0.1, 0.03],
            yaw: truth.yaw(0),
        });
    }
    s
}

/// Two flights joined by a landing.
pub fn landing_scenario(seed: u64) -> ScenarioSpec {
    let mut stairs = staircase(10, 0.17, 0.28, 1.2, 0.0);
    stairs.landings.push(Landing { after: 5, length: 1.2 });
    let mut path = PathSpec::ascend(30);
    path.coverage = 0.9;
    scenario("landing", stairs, &path, seed)
}

/// Scenarios with heavily cluttered, labelled clouds.
pub fn segmentation_suite() -> Vec<ScenarioSpec> {
    let mut out = Vec::new();
    for (k, (steps, width, curv)) in [(8, 1.5, 0.0), (10, 2.0, 4.0), (12, 1.2, -5.0), (6, 3.0, 0.0), (14, 1.6, 8.0)].into_iter().enumerate() {
        let stairs = staircase(steps, 0.17, 0.29, width, curv);
        let path = PathSpec { lateral: (-0.2, 0.2), coverage: 1.0, fov: lidar_fov(), ..PathSpec::ascend(20) };
        let name = format!("clutter_{k}");
        let mut s = scenario(&name, stairs, &path, 1000 + k as u64);
        s.clutter = scatter_clutter(&s.staircase, steps / 2 + 2);
        s.detector.false_line_rate = 0.3;
        s.detector.clutter_edge_rate = CLUTTER_EDGE_RATE;
        s.point_density = 1500.0;
        out.push(s);
    }
    out
}
