// SPDX-License-Identifier: Apache-2.0

//! Accuracy metrics against ground truth.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::math::{sqrt, to_degrees, wrap};
use crate::model::{Stair, StaircaseParams};
use crate::segmentation::PointLabel;

/// Location error of an estimate in SI units (m, deg), plus how many true
/// stairs had no estimate and how many estimates had no true stair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LocationError {
    pub xy_rmse: f64,
    pub z_rmse: f64,
    pub orientation_rmse_deg: f64,
    pub matched: usize,
    pub missing: usize,
    pub extra: usize,
}

/// Pairs estimated and true stairs by elevation: each pair must be closer
/// than half a stair height, pairs never cross, closest pairs win.
pub fn correspond(estimate: &[Stair], truth: &[Stair], height: f64) -> Vec<(usize, usize)> {
    let mut cands = Vec::new();
    for (e, s) in estimate.iter().enumerate() {
        for (t, g) in truth.iter().enumerate() {
            let dz = (s.elevation() - g.elevation()).abs();
            if dz < 0.5 * height {
                cands.push((dz, e, t));
            }
        }
    }
    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_e = alloc::vec![false; estimate.len()];
    let mut used_t = alloc::vec![false; truth.len()];
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (_, e, t) in cands {
        if used_e[e] || used_t[t] || pairs.iter().any(|&(e2, t2)| (e < e2) != (t < t2)) {
            continue;
        }
        used_e[e] = true;
        used_t[t] = true;
        pairs.push((e, t));
    }
    pairs.sort_unstable();
    pairs
}

/// Undirected angle between two lines, in `[-pi/2, pi/2]`.
pub fn line_angle_error(a: f64, b: f64) -> f64 {
    let d = wrap(a - b);
    if d > FRAC_PI_2 {
        d - PI
    } else if d < -FRAC_PI_2 {
        d + PI
    } else {
        d
    }
}

/// XY error is the perpendicular distance of each estimated endpoint to the
/// true infinite line, so sliding along the line costs nothing.
pub fn location_rmse(estimate: &[Stair], truth: &[Stair], height: f64) -> LocationError {
    let pairs = correspond(estimate, truth, height);
    let (mut xy, mut z, mut ang) = (0.0, 0.0, 0.0);
    for &(e, t) in &pairs {
        let s = &estimate[e];
        let g = &truth[t];
        for p in [&s.endpoints.start, &s.endpoints.end] {
            let d = g.line.signed_distance_xy(p);
            xy += d * d;
            let dz = p[2] - g.line.mean_z();
            z += dz * dz;
        }
        let a = line_angle_error(s.line.phi, g.line.phi);
        ang += a * a;
    }
    let k = pairs.len();
    let rms = |sum: f64, count: usize| if count == 0 { 0.0 } else { sqrt(sum / count as f64) };
    LocationError {
        xy_rmse: rms(xy, 2 * k),
        z_rmse: rms(z, 2 * k),
        orientation_rmse_deg: to_degrees(rms(ang, k)),
        matched: k,
        missing: truth.len() - k,
        extra: estimate.len() - k,
    }
}

/// Absolute parameter errors: height, depth and width in m, curvature in deg.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamError {
    pub height: f64,
    pub depth: f64,
    pub width: f64,
    pub curvature_deg: f64,
}

pub fn param_error(estimate: &StaircaseParams, truth: &StaircaseParams) -> ParamError {
    ParamError {
        height: (estimate.height - truth.height).abs(),
        depth: (estimate.depth - truth.depth).abs(),
        width: (estimate.width - truth.width).abs(),
        curvature_deg: to_degrees(wrap(estimate.curvature - truth.curvature).abs()),
    }
}

/// Per-point confusion counts with tread as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_positive: usize,
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
}

impl Confusion {
    pub fn from_labels(predicted_tread: &[bool], truth: &[PointLabel]) -> Self {
        let mut c = Confusion::default();
        for (&p, &t) in predicted_tread.iter().zip(truth) {
            match (p, t == PointLabel::Tread) {
                (true, true) => c.true_positive += 1,
                (true, false) => c.false_positive += 1,
                (false, false) => c.true_negative += 1,
                (false, true) => c.false_negative += 1,
            }
        }
        c
    }

    pub fn add(&mut self, other: &Confusion) {
        self.true_positive += other.true_positive;
        self.false_positive += other.false_positive;
        self.true_negative += other.true_negative;
        self.false_negative += other.false_negative;
    }

    pub fn total(&self) -> usize {
        self.true_positive + self.false_positive + self.true_negative + self.false_negative
    }

    fn ratio(num: usize, den: usize) -> f64 {
        if den == 0 {
            100.0
        } else {
            100.0 * num as f64 / den as f64
        }
    }

    /// Percent of points labelled correctly.
    pub fn accuracy(&self) -> f64 {
        Self::ratio(self.true_positive + self.true_negative, self.total())
    }

    pub fn precision(&self) -> f64 {
        Self::ratio(self.true_positive, self.true_positive + self.false_positive)
    }

    pub fn recall(&self) -> f64 {
        Self::ratio(self.true_positive, self.true_positive + self.false_negative)
    }
}
