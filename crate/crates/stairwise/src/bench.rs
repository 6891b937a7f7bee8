// SPDX-License-Identifier: Apache-2.0

//! Latency benchmarks of the filter step and of cloud segmentation.

use std::hint::black_box;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stairwise_core::filter::{filter_step_with, FilterConfig};
use stairwise_core::frames::initialize_belief;
use stairwise_core::sim::{build_staircase, render_cloud, render_frame, FieldOfView, Obstacles, View};
use stairwise_core::{segment_staircase, MeasurementFrame, PointCloud, RobotPose, SegmentationConfig, StaircaseBelief};

use crate::scenarios::{scenario, scatter_clutter, staircase, PathSpec};
use crate::suite::Table;

pub const CLOUD_POINTS: usize = 250_000;

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub case: String,
    pub stairs: usize,
    pub points: usize,
    pub reps: usize,
    pub median: Duration,
    pub p90: Duration,
}

fn quantile(sorted: &[Duration], q: f64) -> Duration {
    sorted[((sorted.len() - 1) as f64 * q).round() as usize]
}

fn summarise(case: &str, stairs: usize, points: usize, mut times: Vec<Duration>) -> BenchRow {
    times.sort_unstable();
    BenchRow { case: case.to_string(), stairs, points, reps: times.len(), median: quantile(&times, 0.5), p90: quantile(&times, 0.9) }
}

/// Belief over an `n`-stair flight after one frame, and a second frame
/// that sees every stair again.
pub fn filter_case(n: usize, seed: u64) -> (StaircaseBelief, MeasurementFrame) {
    let spec = scenario("bench", staircase(n, 0.17, 0.28, 1.5, 2.0), &PathSpec::ascend(2), seed);
    let truth = build_staircase(&spec.staircase).expect("valid");
    let view = View { pose: RobotPose::new(-1.0, 0.0, 0.0, 0.0), fov: FieldOfView::unlimited() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (f0, _) = render_frame(&truth, &view, &spec.noise, &spec.detector, &Obstacles::default(), &mut rng);
    let (f1, _) = render_frame(&truth, &view, &spec.noise, &spec.detector, &Obstacles::default(), &mut rng);
    (initialize_belief(&f0).expect("full view initialises"), f1)
}

/// A cluttered twenty-stair cloud thinned evenly to exactly `points` points,
/// with a belief to segment it.
pub fn segmentation_case(points: usize, seed: u64) -> (StaircaseBelief, PointCloud) {
    let (belief, _) = filter_case(20, seed);
    let mut spec = scenario("bench", staircase(20, 0.17, 0.28, 1.5, 2.0), &PathSpec::ascend(2), seed);
    spec.clutter = scatter_clutter(&spec.staircase, 6);
    let truth = build_staircase(&spec.staircase).expect("valid");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    spec.point_density = 1000.0;
    let probe = render_cloud(&truth, &spec, &mut rng).len();
    spec.point_density *= 1.05 * points as f64 / probe as f64;
    let full = render_cloud(&truth, &spec, &mut rng);
    let n = full.len();
    let pick: Vec<usize> = (0..points.min(n)).map(|i| i * n / points.min(n)).collect();
    let labels = full.labels.as_ref().map(|l| pick.iter().map(|&i| l[i]).collect());
    let cloud = PointCloud { points: pick.iter().map(|&i| full.points[i]).collect(), labels };
    (belief, cloud)
}

/// Median latencies: filter steps over a range of stair counts,
/// segmentation of a `CLOUD_POINTS` cloud, and both back to back.
pub fn run_bench(reps: usize, stair_counts: &[usize]) -> Vec<BenchRow> {
    let reps = reps.max(1);
    let config = FilterConfig::default();
    let mut rows = Vec::new();
    for &n in stair_counts {
        let (belief, frame) = filter_case(n, 7);
        let times = (0..reps)
            .map(|_| {
                let t = Instant::now();
                black_box(filter_step_with(black_box(&belief), black_box(&frame), &config).ok());
                t.elapsed()
            })
            .collect();
        rows.push(summarise("filter_step", n, 0, times));
    }
    let seg = SegmentationConfig::default();
    let (sb, cloud) = segmentation_case(CLOUD_POINTS, 11);
    let times = (0..reps)
        .map(|_| {
            let t = Instant::now();
            black_box(segment_staircase(black_box(&sb), black_box(&cloud), &seg));
            t.elapsed()
        })
        .collect();
    rows.push(summarise("segmentation", sb.len(), cloud.len(), times));
    let (belief, frame) = filter_case(20, 7);
    let times = (0..reps)
        .map(|_| {
            let t = Instant::now();
            let out = filter_step_with(&belief, &frame, &config).ok();
            let b = out.as_ref().and_then(|o| o.beliefs.first()).unwrap_or(&belief);
            black_box(segment_staircase(b, black_box(&cloud), &seg));
            t.elapsed()
        })
        .collect();
    rows.push(summarise("filter_step+segmentation", 20, cloud.len(), times));
    rows
}

pub fn bench_table(rows: &[BenchRow]) -> Table {
    Table {
        name: "bench",
        header: vec!["case", "stairs", "points", "reps", "median_ms", "p90_ms"],
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    r.case.clone(),
                    r.stairs.to_string(),
                    r.points.to_string(),
                    r.reps.to_string(),
                    format!("{:.4}", r.median.as_secs_f64() * 1e3),
                    format!("{:.4}", r.p90.as_secs_f64() * 1e3),
                ]
            })
            .collect(),
    }
}
