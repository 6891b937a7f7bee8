// SPDX-License-Identifier: Apache-2.0

//! Runs estimators over simulated scenarios and scores them.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use stairwise_core::baseline::BaselineEstimate;
use stairwise_core::metrics::{location_rmse, param_error, Confusion, LocationError, ParamError};
use stairwise_core::segmentation::{segment_staircase, tread_mask};
use stairwise_core::sim::{simulate, simulate_frames, GroundTruth, ScenarioSpec, TrueStaircase};
use stairwise_core::{
    BaselineKind, MeasurementFrame, PointCloud, Stair, StaircaseBelief, StaircaseParams, StaircaseTracker,
};

use crate::config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ekf,
    Avg,
    Max,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Ekf, Method::Avg, Method::Max];

    pub fn name(self) -> &'static str {
        match self {
            Self::Ekf => "ekf",
            Self::Avg => "avg",
            Self::Max => "max",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "ekf" => Ok(Self::Ekf),
            "avg" => Ok(Self::Avg),
            "max" => Ok(Self::Max),
            _ => Err(format!("unknown method {s:?} (ekf, avg, max)")),
        }
    }
}

/// Final output of one estimator on one frame sequence.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub method: Method,
    /// Every estimated stair, all flights merged and sorted by elevation.
    pub stairs: Vec<Stair>,
    /// Parameters of the largest flight.
    pub params: Option<StaircaseParams>,
    /// Filter beliefs (EKF only).
    pub beliefs: Vec<StaircaseBelief>,
    /// Per-frame parameters of the largest flight, for traces.
    pub trace: Vec<Option<StaircaseParams>>,
    pub step_times: Vec<Duration>,
    pub failed_steps: usize,
}

pub fn estimate(method: Method, frames: &[MeasurementFrame], config: &RunConfig) -> Estimate {
    let mut step_times = Vec::with_capacity(frames.len());
    let mut trace = Vec::with_capacity(frames.len());
    match method {
        Method::Ekf => {
            let mut tracker = StaircaseTracker::new(config.filter);
            let mut failed = 0;
            for f in frames {
                let t = Instant::now();
                if tracker.process(f).is_err() {
                    failed += 1;
                }
                step_times.push(t.elapsed());
                trace.push(largest(tracker.beliefs()).map(|b| b.params));
            }
            failed += tracker.failed_steps.len();
            let beliefs = tracker.into_beliefs();
            let params = largest(&beliefs).map(|b| b.params);
            let mut stairs: Vec<Stair> = beliefs.iter().flat_map(|b| b.stairs.iter().copied()).collect();
            stairs.sort_by(|a, b| a.elevation().total_cmp(&b.elevation()));
            Estimate { method, stairs, params, beliefs, trace, step_times, failed_steps: failed }
        }
        Method::Avg | Method::Max => {
            let kind = if method == Method::Avg { BaselineKind::Avg } else { BaselineKind::Max };
            let mut est = BaselineEstimate::with_config(kind, config.baseline);
            for f in frames {
                let t = Instant::now();
                est.step(f);
                step_times.push(t.elapsed());
                trace.push(est.params());
            }
            let params = est.params();
            Estimate { method, stairs: est.stairs, params, beliefs: Vec::new(), trace, step_times, failed_steps: 0 }
        }
    }
}

fn largest(beliefs: &[StaircaseBelief]) -> Option<&StaircaseBelief> {
    // first of the largest keeps ties deterministic
    beliefs.iter().rev().max_by_key(|b| b.len())
}

/// Errors of one estimate against the truth. Parameter errors are absent
/// when the estimate has no flight parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub location: LocationError,
    pub params: Option<ParamError>,
}

pub fn score(est: &Estimate, truth: &TrueStaircase) -> Score {
    Score {
        location: location_rmse(&est.stairs, &truth.stairs, truth.params.height),
        params: est.params.map(|p| param_error(&p, &truth.params)),
    }
}

/// Segments the cloud with every belief; a point is tread when any belief
/// claims it.
pub fn segment_beliefs(beliefs: &[StaircaseBelief], cloud: &PointCloud, config: &RunConfig) -> Vec<bool> {
    let mut mask = vec![false; cloud.len()];
    for b in beliefs {
        let segs = segment_staircase(b, cloud, &config.segmentation);
        for (m, t) in mask.iter_mut().zip(tread_mask(cloud.len(), &segs)) {
            *m |= t;
        }
    }
    mask
}

pub fn segmentation_confusion(beliefs: &[StaircaseBelief], cloud: &PointCloud, config: &RunConfig) -> Option<Confusion> {
    let labels = cloud.labels.as_ref()?;
    Some(Confusion::from_labels(&segment_beliefs(beliefs, cloud, config), labels))
}

/// One scenario run: every requested method plus, for the EKF, segmentation
/// of the scenario cloud when `with_cloud` is set.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub truth: GroundTruth,
    pub estimates: Vec<(Estimate, Score)>,
    pub segmentation: Option<Confusion>,
    pub segmentation_time: Duration,
}

pub fn run_scenario(spec: &ScenarioSpec, methods: &[Method], with_cloud: bool, config: &RunConfig) -> stairwise_core::Result<ScenarioRun> {
    let spec = config.prepare(spec);
    let (truth, frames, cloud) = if with_cloud {
        let s = simulate(&spec)?;
        (s.truth, s.frames, Some(s.cloud))
    } else {
        let (staircase, frames, correspondences) = simulate_frames(&spec)?;
        (GroundTruth { staircase, correspondences }, frames, None)
    };
    let mut estimates = Vec::with_capacity(methods.len());
    let mut segmentation = None;
    let mut segmentation_time = Duration::ZERO;
    for &m in methods {
        let est = estimate(m, &frames, config);
        let sc = score(&est, &truth.staircase);
        if m == Method::Ekf {
            if let Some(cloud) = &cloud {
                let t = Instant::now();
                segmentation = segmentation_confusion(&est.beliefs, cloud, config);
                segmentation_time = t.elapsed();
            }
        }
        estimates.push((est, sc));
    }
    Ok(ScenarioRun { truth, estimates, segmentation, segmentation_time })
}
