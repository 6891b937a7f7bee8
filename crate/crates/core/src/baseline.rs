// SPDX-License-Identifier: Apache-2.0

//! Proximity-matching mergers used for comparison: AVG averages matched
//! endpoints with the running estimate, MAX keeps the endpoint pair with the
//! largest separation. Neither carries a covariance or a staircase model.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::frames::frame_to_world;
use crate::math::{dot2, hypot};
use crate::model::{derive_params, MeasurementFrame, Stair, StairEndpoints, StairLine, StaircaseParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Avg,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    /// Maximum elevation difference for two stairs to be the same (m).
    pub z_gate: f64,
    /// Maximum XY distance from a measured centre to the estimated edge
    /// segment (m).
    pub xy_gate: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { z_gate: 0.08, xy_gate: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineEstimate {
    pub kind: BaselineKind,
    pub config: BaselineConfig,
    /// Sorted by elevation.
    pub stairs: Vec<Stair>,
}

fn distance_to_segment(p: [f64; 2], a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = dot2(ab, ab);
    let t = if len2 > 0.0 { (dot2(ap, ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    hypot(ap[0] - t * ab[0], ap[1] - t * ab[1])
}

fn mid(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2])]
}

fn dist3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    libm::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
}

fn rebuild(endpoints: StairEndpoints, fallback: &StairLine) -> Stair {
    let line = StairLine::through(&endpoints.start, &endpoints.end).unwrap_or(*fallback);
    Stair::new(line, endpoints)
}

impl BaselineEstimate {
    pub fn new(kind: BaselineKind) -> Self {
        Self { kind, config: BaselineConfig::default(), stairs: Vec::new() }
    }

    pub fn with_config(kind: BaselineKind, config: BaselineConfig) -> Self {
        Self { kind, config, stairs: Vec::new() }
    }

    /// Parameters derived from the current stairs, if there are enough.
    pub fn params(&self) -> Option<StaircaseParams> {
        derive_params(&self.stairs).ok()
    }

    pub fn step(&mut self, frame: &MeasurementFrame) {
        let measured = frame_to_world(frame);
        let mut taken = alloc::vec![false; self.stairs.len()];
        let mut appended = Vec::new();
        for m in measured {
            let c = m.endpoints.center_xy();
            let z = m.elevation();
            let best = self
                .stairs
                .iter()
                .enumerate()
                .filter(|(i, _)| !taken[*i])
                .map(|(i, s)| (i, (s.elevation() - z).abs(), distance_to_segment(c, &s.endpoints.start, &s.endpoints.end)))
                .filter(|&(_, dz, dxy)| dz < self.config.z_gate && dxy < self.config.xy_gate)
                .min_by(|a, b| (a.1 + a.2).total_cmp(&(b.1 + b.2)));
            let Some((i, _, _)) = best else {
                appended.push(m);
                continue;
            };
            taken[i] = true;
            let old = self.stairs[i];
            let mut e = m.endpoints;
            let dir = [old.endpoints.end[0] - old.endpoints.start[0], old.endpoints.end[1] - old.endpoints.start[1]];
            if dot2([e.end[0] - e.start[0], e.end[1] - e.start[1]], dir) < 0.0 {
                e = e.swapped();
            }
            let merged = match self.kind {
                BaselineKind::Avg => StairEndpoints::new(mid(&old.endpoints.start, &e.start), mid(&old.endpoints.end, &e.end)),
                BaselineKind::Max => {
                    let pts = [old.endpoints.start, old.endpoints.end, e.start, e.end];
                    let mut best = (0, 1, dist3(&pts[0], &pts[1]));
                    for a in 0..4 {
                        for b in a + 1..4 {
                            let d = dist3(&pts[a], &pts[b]);
                            if d > best.2 {
                                best = (a, b, d);
                            }
                        }
                    }
                    let (mut s, mut t) = (pts[best.0], pts[best.1]);
                    if dot2([t[0] - s[0], t[1] - s[1]], dir) < 0.0 {
                        core::mem::swap(&mut s, &mut t);
                    }
                    StairEndpoints::new(s, t)
                }
            };
            self.stairs[i] = rebuild(merged, &old.line);
        }
        for m in appended {
            self.stairs.push(rebuild(m.endpoints, &m.line));
        }
        self.stairs.sort_by(|a, b| a.elevation().total_cmp(&b.elevation()));
    }
}
