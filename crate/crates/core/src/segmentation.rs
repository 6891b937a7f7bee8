// SPDX-License-Identifier: Apache-2.0

//! Tread surface segmentation.
//!
//! Each stair gets an oriented crop-box that starts at its edge and runs one
//! tread depth up the flight. Inside it a horizontal plane `z = c` is found
//! by RANSAC, which reduces to a 1-D search over sorted elevations.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, dot2, sqrt, unit};
use crate::model::{ascending_yaws, Stair, StaircaseBelief, StaircaseParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointLabel {
    Tread,
    Clutter,
    Other,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
    /// Ground truth, when known.
    pub labels: Option<Vec<PointLabel>>,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 3]>) -> Self {
        Self { points, labels: None }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point cloud"));
        }
        if let Some(l) = &self.labels {
            if l.len() != self.points.len() {
                return Err(Error::InvalidScenario("label count differs from point count"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationConfig {
    /// Extra length on both sides of the edge segment (m).
    pub margin: f64,
    /// `|z - c|` bound for inliers (m).
    pub inlier_tolerance: f64,
    pub iterations: usize,
    pub min_points: usize,
    /// Half-height of the box is `sigma_scale * sigma_z`, floored below.
    pub sigma_scale: f64,
    /// Minimum full box height (m).
    pub min_height: f64,
    /// Allowed plane tilt (rad). Zero keeps planes exactly horizontal.
    pub max_tilt: f64,
    pub seed: u64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            margin: 0.05,
            inlier_tolerance: 0.011,
            iterations: 50,
            min_points: 20,
            sigma_scale: 3.0,
            min_height: 0.04,
            max_tilt: 0.0,
            seed: 0x5eed,
        }
    }
}

/// Oriented box: `axes[0]` along the edge, `axes[1]` up the flight, z up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropBox {
    pub center: [f64; 3],
    pub yaw: f64,
    pub half_extents: [f64; 3],
    /// Edge of the next stair as a point and its ascending normal. On a
    /// curved flight the box is widened to cover the outer side of the
    /// tread; this half-plane keeps the inner side from reaching past the
    /// next riser.
    #[serde(default)]
    pub back: Option<([f64; 2], [f64; 2])>,
}

impl CropBox {
    /// Along-edge and ascending unit axes.
    pub fn axes(&self) -> ([f64; 2], [f64; 2]) {
        let a = unit(self.yaw);
        ([-a[1], a[0]], a)
    }

    pub fn local(&self, p: &[f64; 3]) -> [f64; 3] {
        let (t, a) = self.axes();
        let d = [p[0] - self.center[0], p[1] - self.center[1]];
        [dot2(d, t), dot2(d, a), p[2] - self.center[2]]
    }

    pub fn contains(&self, p: &[f64; 3]) -> bool {
        let l = self.local(p);
        (0..3).all(|k| l[k].abs() <= self.half_extents[k])
            && self.back.is_none_or(|(q, n)| dot2([p[0] - q[0], p[1] - q[1]], n) <= 0.0)
    }

    pub fn z_range(&self) -> (f64, f64) {
        (self.center[2] - self.half_extents[2], self.center[2] + self.half_extents[2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSegment {
    pub stair: usize,
    /// Indices into the cloud.
    pub inliers: Vec<usize>,
    pub plane_z: f64,
}

impl SurfaceSegment {
    pub fn len(&self) -> usize {
        self.inliers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inliers.is_empty()
    }
}

/// Crop-box of one stair. `ascending` is the stair's own ascending yaw and
/// `z_variance` the variance of its mean edge elevation.
pub fn build_cropbox(
    stair: &Stair,
    params: &StaircaseParams,
    ascending: f64,
    z_variance: f64,
    config: &SegmentationConfig,
) -> CropBox {
    let a = unit(ascending);
    let c = stair.endpoints.center_xy();
    // on a curved flight the outer side of the tread is deeper than d; the
    // next tread sits a stair height higher, so the z band keeps it out
    let half_depth = 0.5 * (params.depth + params.width * math::sin(0.5 * params.curvature).abs());
    let half_height = (config.sigma_scale * sqrt(z_variance.max(0.0))).max(0.5 * config.min_height);
    CropBox {
        center: [c[0] + half_depth * a[0], c[1] + half_depth * a[1], stair.line.mean_z()],
        yaw: ascending,
        half_extents: [0.5 * stair.endpoints.span_xy() + config.margin, half_depth, half_height],
        back: None,
    }
}

pub(crate) fn mean_z_variance(belief: &StaircaseBelief, i: usize) -> f64 {
    let c = &belief.covariance;
    let b = 4 * i;
    0.25 * (c[(b + 2, b + 2)] + c[(b + 3, b + 3)] + 2.0 * c[(b + 2, b + 3)])
}

/// Crop-boxes of every stair of a belief.
pub fn belief_cropboxes(belief: &StaircaseBelief, config: &SegmentationConfig) -> Vec<CropBox> {
    let centers: Vec<[f64; 2]> = belief.stairs.iter().map(|s| s.endpoints.center_xy()).collect();
    let yaws = if belief.len() < 2 { alloc::vec![belief.params.start_yaw; belief.len()] } else { ascending_yaws(&belief.stairs, &centers) };
    (0..belief.len())
        .map(|i| {
            let mut b = build_cropbox(&belief.stairs[i], &belief.params, yaws[i], mean_z_variance(belief, i), config);
            if belief.params.curvature != 0.0 && i + 1 < belief.len() {
                b.back = Some((centers[i + 1], unit(yaws[i + 1])));
            }
            b
        })
        .collect()
}

fn lower_bound(sorted: &[f64], v: f64) -> usize {
    sorted.partition_point(|&x| x < v)
}

fn upper_bound(sorted: &[f64], v: f64) -> usize {
    sorted.partition_point(|&x| x <= v)
}

fn vertical_ransac(z: &[f64], config: &SegmentationConfig, rng: &mut ChaCha8Rng) -> f64 {
    let mut sorted = z.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tol = config.inlier_tolerance;
    let count = |c: f64| upper_bound(&sorted, c + tol) - lower_bound(&sorted, c - tol);
    let mut best_c = sorted[0];
    let mut best_n = 0;
    for _ in 0..config.iterations.max(1) {
        let c = z[rng.random_range(0..z.len())];
        let n = count(c);
        if n > best_n || (n == best_n && c < best_c) {
            best_n = n;
            best_c = c;
        }
    }
    // mean of the consensus set
    let lo = lower_bound(&sorted, best_c - tol);
    let hi = upper_bound(&sorted, best_c + tol);
    sorted[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
}

/// Plane `n . p = offset` through three points, `None` when degenerate.
fn plane_through(a: &[f64; 3], b: &[f64; 3], c: &[f64; 3]) -> Option<([f64; 3], f64)> {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let mut n = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
    let len = sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
    if len < 1e-12 {
        return None;
    }
    if n[2] < 0.0 {
        n = [-n[0], -n[1], -n[2]];
    }
    let n = [n[0] / len, n[1] / len, n[2] / len];
    Some((n, n[0] * a[0] + n[1] * a[1] + n[2] * a[2]))
}

/// RANSAC over planes whose normal is within `max_tilt` of vertical.
fn tilted_ransac(points: &[[f64; 3]], config: &SegmentationConfig, rng: &mut ChaCha8Rng) -> ([f64; 3], f64) {
    let min_nz = math::cos(config.max_tilt);
    let tol = config.inlier_tolerance;
    let mut best = ([0.0, 0.0, 1.0], points[0][2]);
    let mut best_n = 0;
    for _ in 0..config.iterations.max(1) {
        let i = rng.random_range(0..points.len());
        let j = rng.random_range(0..points.len());
        let k = rng.random_range(0..points.len());
        let Some((n, off)) = plane_through(&points[i], &points[j], &points[k]) else { continue };
        if n[2] < min_nz {
            continue;
        }
        let count = points.iter().filter(|p| (n[0] * p[0] + n[1] * p[1] + n[2] * p[2] - off).abs() <= tol).count();
        if count > best_n {
            best_n = count;
            best = (n, off);
        }
    }
    best
}

/// Fits a ground-parallel plane to the points of one crop-box. `indices`
/// are carried through into the segment.
pub fn fit_tread_plane(
    points: &[[f64; 3]],
    indices: &[usize],
    stair: usize,
    config: &SegmentationConfig,
    rng: &mut ChaCha8Rng,
) -> Result<SurfaceSegment> {
    if points.len() < config.min_points.max(1) {
        return Err(Error::InsufficientPoints { found: points.len(), required: config.min_points.max(1) });
    }
    let tol = config.inlier_tolerance;
    if config.max_tilt > 0.0 {
        let (n, off) = tilted_ransac(points, config, rng);
        let inliers = points
            .iter()
            .zip(indices)
            .filter(|(p, _)| (n[0] * p[0] + n[1] * p[1] + n[2] * p[2] - off).abs() <= tol)
            .map(|(_, &i)| i)
            .collect();
        let plane_z = points.iter().map(|p| p[2]).sum::<f64>() / points.len() as f64;
        return Ok(SurfaceSegment { stair, inliers, plane_z });
    }
    let z: Vec<f64> = points.iter().map(|p| p[2]).collect();
    let plane_z = vertical_ransac(&z, config, rng);
    let inliers = z
        .iter()
        .zip(indices)
        .filter(|(zz, _)| (**zz - plane_z).abs() <= tol)
        .map(|(_, &i)| i)
        .collect();
    Ok(SurfaceSegment { stair, inliers, plane_z })
}

fn stair_rng(seed: u64, stair: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (stair as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Segments the tread surface of every stair of `belief`. Stairs with too
/// few points get an empty segment; a point belongs to at most one stair,
/// the lower one on ties.
pub fn segment_staircase(belief: &StaircaseBelief, cloud: &PointCloud, config: &SegmentationConfig) -> Vec<SurfaceSegment> {
    let boxes = belief_cropboxes(belief, config);
    segment_with_boxes(&boxes, cloud, config)
}

pub fn segment_with_boxes(boxes: &[CropBox], cloud: &PointCloud, config: &SegmentationConfig) -> Vec<SurfaceSegment> {
    let n = boxes.len();
    // boxes sorted by their lower z so each point only tests the few boxes
    // whose elevation band contains it
    let mut by_z: Vec<usize> = (0..n).collect();
    by_z.sort_by(|&a, &b| boxes[a].z_range().0.total_cmp(&boxes[b].z_range().0));
    let lows: Vec<f64> = by_z.iter().map(|&i| boxes[i].z_range().0).collect();
    let max_half = boxes.iter().map(|b| b.half_extents[2]).fold(0.0, f64::max);

    let mut members: Vec<Vec<usize>> = alloc::vec![Vec::new(); n];
    for (pi, p) in cloud.points.iter().enumerate() {
        let end = upper_bound(&lows, p[2]);
        let start = lower_bound(&lows, p[2] - 2.0 * max_half);
        for &bi in &by_z[start..end] {
            let b = &boxes[bi];
            if p[2] <= b.z_range().1 && b.contains(p) {
                members[bi].push(pi);
            }
        }
    }

    let mut claimed = alloc::vec![false; cloud.len()];
    let mut out = Vec::with_capacity(n);
    for (i, idx) in members.iter().enumerate() {
        let pts: Vec<[f64; 3]> = idx.iter().map(|&k| cloud.points[k]).collect();
        let mut rng = stair_rng(config.seed, i);
        let mut seg = fit_tread_plane(&pts, idx, i, config, &mut rng)
            .unwrap_or(SurfaceSegment { stair: i, inliers: Vec::new(), plane_z: boxes[i].center[2] });
        seg.inliers.retain(|&k| !claimed[k]);
        for &k in &seg.inliers {
            claimed[k] = true;
        }
        out.push(seg);
    }
    out
}

/// Per-point tread mask from a set of segments.
pub fn tread_mask(cloud_len: usize, segments: &[SurfaceSegment]) -> Vec<bool> {
    let mut mask = alloc::vec![false; cloud_len];
    for s in segments {
        for &i in &s.inliers {
            mask[i] = true;
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{derive_params, StairEndpoints, StairLine};
    use alloc::vec;
    use rand_distr::{Distribution, Normal};

    fn stairs(n: usize) -> Vec<Stair> {
        (0..n)
            .map(|i| {
                let x = 1.0 + 0.28 * i as f64;
                let z = 0.17 * (i + 1) as f64;
                Stair::new(StairLine::new(x, 0.0, z, z), StairEndpoints::new([x, -0.5, z], [x, 0.5, z]))
            })
            .collect()
    }

    #[test]
    fn box_dimensions() {
        let s = stairs(3);
        let p = derive_params(&s).unwrap();
        let cfg = SegmentationConfig::default();
        let b = build_cropbox(&s[0], &p, 0.0, 1e-4, &cfg);
        assert!((2.0 * b.half_extents[0] - 1.1).abs() < 1e-12);
        assert!((2.0 * b.half_extents[1] - 0.28).abs() < 1e-12);
        assert!((2.0 * b.half_extents[2] - 0.06).abs() < 1e-12);
        assert!((b.center[0] - 1.14).abs() < 1e-12);
        let z = build_cropbox(&s[0], &p, 0.0, 0.0, &cfg);
        assert!((2.0 * z.half_extents[2] - 0.04).abs() < 1e-12);
        assert!(b.contains(&[1.2, 0.54, 0.19]) && !b.contains(&[0.99, 0.0, 0.17]));
    }

    #[test]
    fn flat_patch_is_all_inliers() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<[f64; 3]> = (0..500).map(|_| [rng.random_range(0.0..1.0), rng.random_range(0.0..0.3), 0.17 + rng.random_range(-0.001..0.001)]).collect();
        let idx: Vec<usize> = (0..pts.len()).collect();
        let cfg = SegmentationConfig { inlier_tolerance: 0.005, ..Default::default() };
        let s = fit_tread_plane(&pts, &idx, 0, &cfg, &mut rng).unwrap();
        assert_eq!(s.len(), 500);
        assert!((s.plane_z - 0.17).abs() < 1e-3);
    }

    #[test]
    fn raised_clutter_is_excluded() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut pts = Vec::new();
        for k in 0..1000 {
            let z = if k % 10 < 3 { 0.27 } else { 0.17 };
            pts.push([rng.random_range(0.0..1.0), rng.random_range(0.0..0.3), z + rng.random_range(-0.002..0.002)]);
        }
        let idx: Vec<usize> = (0..pts.len()).collect();
        let s = fit_tread_plane(&pts, &idx, 0, &SegmentationConfig::default(), &mut rng).unwrap();
        assert!(s.inliers.iter().all(|&i| i % 10 >= 3));
        assert_eq!(s.len(), 700);
    }

    #[test]
    fn too_few_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = vec![[0.0, 0.0, 0.0]; 19];
        let idx: Vec<usize> = (0..19).collect();
        let e = fit_tread_plane(&pts, &idx, 0, &SegmentationConfig::default(), &mut rng).unwrap_err();
        assert_eq!(e, Error::InsufficientPoints { found: 19, required: 20 });
    }

    #[test]
    fn tilted_mode_accepts_a_slight_slope() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let slope = math::to_radians(2.0);
        let pts: Vec<[f64; 3]> = (0..400)
            .map(|_| {
                let x: f64 = rng.random_range(0.0..1.0);
                [x, rng.random_range(0.0..0.3), 0.17 + x * libm::tan(slope)]
            })
            .collect();
        let idx: Vec<usize> = (0..400).collect();
        let flat = fit_tread_plane(&pts, &idx, 0, &SegmentationConfig { inlier_tolerance: 0.005, ..Default::default() }, &mut rng).unwrap();
        let cfg = SegmentationConfig { inlier_tolerance: 0.005, max_tilt: math::to_radians(5.0), iterations: 200, ..Default::default() };
        let tilted = fit_tread_plane(&pts, &idx, 0, &cfg, &mut rng).unwrap();
        assert!(tilted.len() > flat.len());
        assert!(tilted.len() >= 390);
    }

    fn synthetic_cloud(stairs: &[Stair], noise: f64, seed: u64) -> (PointCloud, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Normal::new(0.0, noise.max(1e-12)).unwrap();
        let mut pts = Vec::new();
        let mut owner = Vec::new();
        for (i, s) in stairs.iter().enumerate() {
            let x0 = s.line.r;
            let z = s.line.z_start;
            for _ in 0..300 {
                let p = [x0 + rng.random_range(0.0..0.28), rng.random_range(-0.5..0.5), z];
                pts.push([p[0] + g.sample(&mut rng) * (noise > 0.0) as u8 as f64, p[1], p[2] + g.sample(&mut rng) * (noise > 0.0) as u8 as f64]);
                owner.push(i);
            }
            // riser below the edge, leaving out the bands within the inlier
            // tolerance of either tread, which no horizontal fit can separate
            for _ in 0..100 {
                pts.push([x0, rng.random_range(-0.5..0.5), z - rng.random_range(0.03..0.14)]);
                owner.push(usize::MAX);
            }
        }
        let labels = owner.iter().map(|&o| if o == usize::MAX { PointLabel::Other } else { PointLabel::Tread }).collect();
        (PointCloud { points: pts, labels: Some(labels) }, owner)
    }

    fn belief(stairs: Vec<Stair>) -> StaircaseBelief {
        let n = stairs.len();
        let params = derive_params(&stairs).unwrap();
        StaircaseBelief { stairs, covariance: nalgebra::DMatrix::identity(4 * n, 4 * n) * 1e-4, params, frame_id: "world".into() }
    }

    #[test]
    fn noise_free_staircase_is_segmented_exactly() {
        let s = stairs(6);
        let (cloud, owner) = synthetic_cloud(&s, 0.0, 5);
        let segs = segment_staircase(&belief(s), &cloud, &SegmentationConfig::default());
        let mask = tread_mask(cloud.len(), &segs);
        for (k, m) in mask.iter().enumerate() {
            assert_eq!(*m, owner[k] != usize::MAX, "point {k}");
        }
        for seg in &segs {
            assert!(seg.inliers.iter().all(|&k| owner[k] == seg.stair));
        }
    }

    #[test]
    fn empty_cloud_gives_empty_segments() {
        let segs = segment_staircase(&belief(stairs(4)), &PointCloud::default(), &SegmentationConfig::default());
        assert_eq!(segs.len(), 4);
        assert!(segs.iter().all(|s| s.is_empty()));
    }

    #[test]
    fn segments_stay_inside_their_boxes_and_are_deterministic() {
        let s = stairs(5);
        let (cloud, _) = synthetic_cloud(&s, 0.005, 6);
        let b = belief(s);
        let cfg = SegmentationConfig::default();
        let a = segment_staircase(&b, &cloud, &cfg);
        assert_eq!(a, segment_staircase(&b, &cloud, &cfg));
        let boxes = belief_cropboxes(&b, &cfg);
        for seg in &a {
            for &k in &seg.inliers {
                assert!(boxes[seg.stair].contains(&cloud.points[k]));
                assert!((cloud.points[k][2] - seg.plane_z).abs() <= cfg.inlier_tolerance);
            }
        }
    }

    #[test]
    fn thick_flat_clutter_is_never_tread() {
        let s = stairs(3);
        let (mut cloud, _) = synthetic_cloud(&s, 0.0, 7);
        let mut labels = cloud.labels.take().unwrap();
        // a 3 cm thick plate over most of stair 1
        let z = s[1].line.z_start + 0.03;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..250 {
            cloud.points.push([s[1].line.r + rng.random_range(0.02..0.26), rng.random_range(-0.4..0.4), z]);
            labels.push(PointLabel::Clutter);
        }
        let segs = segment_staircase(&belief(s), &cloud, &SegmentationConfig::default());
        for seg in &segs {
            assert!(seg.inliers.iter().all(|&k| labels[k] != PointLabel::Clutter));
        }
    }
}
