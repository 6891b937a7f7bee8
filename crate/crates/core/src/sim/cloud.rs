// SPDX-License-Identifier: Apache-2.0

//! Labelled point clouds sampled from the true surfaces.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Clutter, ClutterShape, Occluder, ScenarioSpec, TrueStaircase};
use crate::model::StairEndpoints;
use crate::math::{cos, dot2, hypot, round, sin, unit};
use crate::segmentation::{PointCloud, PointLabel};

struct Sink<'a> {
    points: Vec<[f64; 3]>,
    labels: Vec<PointLabel>,
    density: f64,
    noise: f64,
    rng: &'a mut ChaCha8Rng,
}

impl Sink<'_> {
    fn count(&self, area: f64) -> usize {
        round(area * self.density).max(0.0) as usize
    }

    fn push(&mut self, p: [f64; 3], label: PointLabel) {
        let mut q = p;
        if self.noise > 0.0 {
            for v in q.iter_mut() {
                let g: f64 = StandardNormal.sample(self.rng);
                *v += self.noise * g;
            }
        }
        self.points.push(q);
        self.labels.push(label);
    }

    /// Uniform samples on the planar quad `a b c d` (in order), skipping
    /// points for which `reject` holds.
    fn quad(&mut self, q: [[f64; 3]; 4], label: PointLabel, reject: &dyn Fn(&[f64; 3]) -> bool) {
        let tri_area = |a: &[f64; 3], b: &[f64; 3], c: &[f64; 3]| {
            let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
            let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
            let x = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
            0.5 * libm::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])
        };
        let a1 = tri_area(&q[0], &q[1], &q[2]);
        let a2 = tri_area(&q[0], &q[2], &q[3]);
        let n = self.count(a1 + a2);
        for _ in 0..n {
            let pick_first = self.rng.random::<f64>() * (a1 + a2) < a1;
            let (a, b, c) = if pick_first { (q[0], q[1], q[2]) } else { (q[0], q[2], q[3]) };
            let (mut s, mut t): (f64, f64) = (self.rng.random(), self.rng.random());
            if s + t > 1.0 {
                s = 1.0 - s;
                t = 1.0 - t;
            }
            let p = [
                a[0] + s * (b[0] - a[0]) + t * (c[0] - a[0]),
                a[1] + s * (b[1] - a[1]) + t * (c[1] - a[1]),
                a[2] + s * (b[2] - a[2]) + t * (c[2] - a[2]),
            ];
            if !reject(&p) {
                self.push(p, label);
            }
        }
    }
}

/// Footprint of a clutter object on its tread.
pub(super) struct Placed {
    center: [f64; 3],
    yaw: f64,
    shape: ClutterShape,
}

impl Placed {
    fn covers(&self, p: &[f64; 3]) -> bool {
        let d = [p[0] - self.center[0], p[1] - self.center[1]];
        match self.shape {
            ClutterShape::Box { size } => {
                let (s, c) = (sin(self.yaw), cos(self.yaw));
                let lx = c * d[0] + s * d[1];
                let ly = -s * d[0] + c * d[1];
                lx.abs() <= 0.5 * size[0] && ly.abs() <= 0.5 * size[1]
            }
            ClutterShape::Cylinder { radius, .. } => hypot(d[0], d[1]) <= radius,
        }
    }
}

pub(super) fn place(truth: &TrueStaircase, c: &Clutter) -> Placed {
    let s = &truth.stairs[c.stair];
    let yaw = truth.yaw(c.stair);
    let a = unit(yaw);
    let t = unit(yaw + FRAC_PI_2);
    let m = s.endpoints.center_xy();
    Placed {
        center: [m[0] + c.along * t[0] + c.into * a[0], m[1] + c.along * t[1] + c.into * a[1], s.elevation()],
        yaw: yaw + c.yaw,
        shape: c.shape,
    }
}

impl Placed {
    /// Half extents along the object's axes and its height.
    fn extents(&self) -> (f64, f64, f64) {
        match self.shape {
            ClutterShape::Box { size } => (0.5 * size[0], 0.5 * size[1], size[2]),
            ClutterShape::Cylinder { radius, height } => (radius, radius, height),
        }
    }

    /// Bounding box as a sightline blocker.
    pub(super) fn occluder(&self) -> Occluder {
        let (hx, hy, h) = self.extents();
        Occluder { center: [self.center[0], self.center[1], self.center[2] + 0.5 * h], half_extents: [hx, hy, 0.5 * h], yaw: self.yaw }
    }

    /// Top edge of the face looking down the flight, the part of an object
    /// a stair-edge detector is most likely to pick up.
    pub(super) fn front_edge(&self) -> StairEndpoints {
        let (hx, hy, h) = self.extents();
        let (s, c) = (sin(self.yaw), cos(self.yaw));
        let z = self.center[2] + h;
        let corner = |y: f64| [self.center[0] - c * hx - s * y, self.center[1] - s * hx + c * y, z];
        StairEndpoints::new(corner(-hy), corner(hy))
    }
}

fn clutter_surfaces(sink: &mut Sink, p: &Placed) {
    let none = |_: &[f64; 3]| false;
    let z0 = p.center[2];
    match p.shape {
        ClutterShape::Box { size } => {
            let (s, c) = (sin(p.yaw), cos(p.yaw));
            let corner = |x: f64, y: f64, z: f64| [p.center[0] + c * x - s * y, p.center[1] + s * x + c * y, z];
            let (hx, hy, top) = (0.5 * size[0], 0.5 * size[1], z0 + size[2]);
            sink.quad([corner(-hx, -hy, top), corner(hx, -hy, top), corner(hx, hy, top), corner(-hx, hy, top)], PointLabel::Clutter, &none);
            let ring = [(-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy)];
            for k in 0..4 {
                let (x0, y0) = ring[k];
                let (x1, y1) = ring[(k + 1) % 4];
                sink.quad([corner(x0, y0, z0), corner(x1, y1, z0), corner(x1, y1, top), corner(x0, y0, top)], PointLabel::Clutter, &none);
            }
        }
        ClutterShape::Cylinder { radius, height } => {
            let top = sink.count(PI * radius * radius);
            for _ in 0..top {
                let r = radius * libm::sqrt(sink.rng.random::<f64>());
                let a = sink.rng.random_range(-PI..PI);
                sink.push([p.center[0] + r * cos(a), p.center[1] + r * sin(a), z0 + height], PointLabel::Clutter);
            }
            let side = sink.count(2.0 * PI * radius * height);
            for _ in 0..side {
                let a = sink.rng.random_range(-PI..PI);
                let z = z0 + height * sink.rng.random::<f64>();
                sink.push([p.center[0] + radius * cos(a), p.center[1] + radius * sin(a), z], PointLabel::Clutter);
            }
        }
    }
}

/// Treads (labelled tread), risers, landings and a ground patch (other),
/// and clutter surfaces (clutter), sampled at `point_density` with Gaussian
/// noise `cloud_noise` on every coordinate. Tread area under clutter is left
/// empty.
pub fn render_cloud(truth: &TrueStaircase, spec: &ScenarioSpec, rng: &mut ChaCha8Rng) -> PointCloud {
    let placed: Vec<Placed> = spec.clutter.iter().map(|c| place(truth, c)).collect();
    let mut sink = Sink { points: Vec::new(), labels: Vec::new(), density: spec.point_density, noise: spec.cloud_noise, rng };
    let p = &truth.params;
    let h = p.height;
    let half = sin(0.5 * p.curvature);
    let n = truth.stairs.len();
    let under_clutter = |q: &[f64; 3]| placed.iter().any(|c| c.covers(q));

    for (i, s) in truth.stairs.iter().enumerate() {
        let z = s.elevation();
        let (a, b) = (s.endpoints.start, s.endpoints.end);
        // back edge of this tread: one depth along the step bisector
        let step = unit(truth.yaw(i) + 0.5 * p.curvature);
        let ds = p.depth + p.width * half;
        let de = p.depth - p.width * half;
        let back_a = [a[0] + ds * step[0], a[1] + ds * step[1], z];
        let back_b = [b[0] + de * step[0], b[1] + de * step[1], z];
        sink.quad([a, back_a, back_b, b], PointLabel::Tread, &under_clutter);

        // landing area between this tread and the next flight's first riser
        if i + 1 < n {
            let next = &truth.stairs[i + 1];
            let gap = dot2(
                [next.endpoints.center_xy()[0] - s.endpoints.center_xy()[0], next.endpoints.center_xy()[1] - s.endpoints.center_xy()[1]],
                step,
            );
            if gap > p.depth + 1e-6 {
                let na = [next.endpoints.start[0], next.endpoints.start[1], z];
                let nb = [next.endpoints.end[0], next.endpoints.end[1], z];
                sink.quad([back_a, na, nb, back_b], PointLabel::Other, &under_clutter);
            }
        }

        // riser below this edge
        let lo = z - h;
        sink.quad([[a[0], a[1], lo], [b[0], b[1], lo], b, a], PointLabel::Other, &|_| false);
    }

    // ground in front of the first riser
    if let Some(first) = truth.stairs.first() {
        let back = unit(truth.yaw(0) + PI);
        let side = unit(truth.yaw(0) + FRAC_PI_2);
        let g = first.elevation() - h;
        let (a, b) = (first.endpoints.start, first.endpoints.end);
        let m = 0.25;
        let a0 = [a[0] - m * side[0], a[1] - m * side[1], g];
        let b0 = [b[0] + m * side[0], b[1] + m * side[1], g];
        let l = 1.0;
        sink.quad(
            [a0, [a0[0] + l * back[0], a0[1] + l * back[1], g], [b0[0] + l * back[0], b0[1] + l * back[1], g], b0],
            PointLabel::Other,
            &|_| false,
        );
    }

    for c in &placed {
        clutter_surfaces(&mut sink, c);
    }
    PointCloud { points: sink.points, labels: Some(sink.labels) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NoiseConfig;
    use crate::segmentation::{build_cropbox, SegmentationConfig};
    use crate::sim::{build_staircase, DetectorSpec, StaircaseSpec, SCHEMA_VERSION};
    use rand::SeedableRng;

    fn scenario(clutter: Vec<Clutter>) -> ScenarioSpec {
        ScenarioSpec {
            schema_version: SCHEMA_VERSION,
            name: "cloud".into(),
            staircase: StaircaseSpec { steps: 6, height: 0.17, depth: 0.28, width: 1.0, start_yaw: 0.4, curvature: 0.0, origin: [0.0, 0.0, 0.0], landings: Vec::new() },
            trajectory: Vec::new(),
            noise: NoiseConfig::default(),
            detector: DetectorSpec::default(),
            clutter,
            occluders: Vec::new(),
            point_density: 1000.0,
            cloud_noise: 0.005,
            seed: 1,
        }
    }

    #[test]
    fn tread_point_count_follows_area() {
        let spec = scenario(Vec::new());
        let truth = build_staircase(&spec.staircase).unwrap();
        let cloud = render_cloud(&truth, &spec, &mut ChaCha8Rng::seed_from_u64(1));
        let labels = cloud.labels.unwrap();
        let treads = labels.iter().filter(|l| **l == PointLabel::Tread).count();
        assert!((treads as f64 - 1680.0).abs() <= 0.05 * 1680.0, "{treads}");
        assert_eq!(labels.iter().filter(|l| **l == PointLabel::Clutter).count(), 0);
    }

    #[test]
    fn clutter_sits_inside_its_stair_box_above_the_tread() {
        let spec = scenario(alloc::vec![Clutter { shape: ClutterShape::Box { size: [0.2, 0.15, 0.1] }, stair: 3, along: 0.1, into: 0.14, yaw: 0.0 }]);
        let truth = build_staircase(&spec.staircase).unwrap();
        let spec = ScenarioSpec { cloud_noise: 0.0, ..spec };
        let cloud = render_cloud(&truth, &spec, &mut ChaCha8Rng::seed_from_u64(2));
        let labels = cloud.labels.unwrap();
        let mut tall = SegmentationConfig::default();
        tall.min_height = 0.5;
        let bx = build_cropbox(&truth.stairs[3], &truth.params, truth.yaw(3), 0.0, &tall);
        let z = truth.stairs[3].elevation();
        let mut any = false;
        for (p, l) in cloud.points.iter().zip(&labels) {
            if *l == PointLabel::Clutter {
                any = true;
                assert!(bx.contains(p) && p[2] >= z - 1e-12);
            }
        }
        assert!(any);
    }

    #[test]
    fn curved_tread_points_fall_inside_their_own_box() {
        let mut spec = scenario(Vec::new());
        spec.staircase.curvature = 0.12;
        spec.staircase.width = 1.5;
        spec.cloud_noise = 0.0;
        let truth = build_staircase(&spec.staircase).unwrap();
        let cloud = render_cloud(&truth, &spec, &mut ChaCha8Rng::seed_from_u64(3));
        let labels = cloud.labels.unwrap();
        let cfg = SegmentationConfig::default();
        let boxes: Vec<_> = (0..6).map(|i| build_cropbox(&truth.stairs[i], &truth.params, truth.yaw(i), 0.0, &cfg)).collect();
        let inside = cloud.points.iter().zip(&labels).filter(|(_, l)| **l == PointLabel::Tread).filter(|(p, _)| boxes.iter().any(|b| b.contains(p))).count();
        let treads = labels.iter().filter(|l| **l == PointLabel::Tread).count();
        // the box is a rectangle, the curved tread a sector: allow a sliver
        assert!(inside as f64 >= 0.97 * treads as f64, "{inside}/{treads}");
    }
}
