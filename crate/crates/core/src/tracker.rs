// SPDX-License-Identifier: Apache-2.0

//! Owns the beliefs of every flight seen so far and routes frames to them.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::filter::{filter_step_with, FilterConfig};
use crate::frames::{frame_to_world, initialize_belief};
use crate::math::{self, dot2, unit};
use crate::model::{ascending_yaw, detect_landing, MeasurementFrame, Stair, StaircaseBelief};

/// Plausible stair geometry for starting a new flight from leftovers.
const HEIGHT_RANGE: (f64, f64) = (0.05, 0.35);
const DEPTH_RANGE: (f64, f64) = (0.1, 1.0);

#[derive(Debug, Clone, Default)]
pub struct StaircaseTracker {
    pub config: FilterConfig,
    beliefs: Vec<StaircaseBelief>,
    /// Measurements no belief used and that could not start a new one.
    pub dropped_measurements: usize,
    /// Beliefs dropped because a larger one explained their measurements.
    pub merged: usize,
    /// Filter steps that failed; the affected belief is kept unchanged.
    pub failed_steps: Vec<Error>,
}

impl StaircaseTracker {
    pub fn new(config: FilterConfig) -> Self {
        Self { config, ..Self::default() }
    }

    pub fn beliefs(&self) -> &[StaircaseBelief] {
        &self.beliefs
    }

    pub fn into_beliefs(self) -> Vec<StaircaseBelief> {
        self.beliefs
    }

    pub fn process(&mut self, frame: &MeasurementFrame) -> Result<()> {
        frame.validate()?;
        let mut claimed = alloc::vec![false; frame.len()];
        let mut next = Vec::with_capacity(self.beliefs.len());
        // larger flights first so a duplicate started from a few unmatched
        // lines loses its measurements to the flight it duplicates
        let mut order: Vec<usize> = (0..self.beliefs.len()).collect();
        order.sort_by_key(|&i| core::cmp::Reverse(self.beliefs[i].len()));
        for b in order.iter().map(|&i| &self.beliefs[i]) {
            match filter_step_with(b, frame, &self.config) {
                Ok(out) => {
                    let m = &out.matches;
                    let used: Vec<usize> = m
                        .matched
                        .iter()
                        .map(|&(_, k)| k)
                        .chain(m.new_preceding.iter().chain(&m.new_succeeding).map(|s| s.measurement))
                        .collect();
                    let taken = used.iter().filter(|&&k| claimed[k]).count();
                    if !used.is_empty() && 2 * taken >= used.len() {
                        self.merged += 1;
                        continue;
                    }
                    for k in used {
                        claimed[k] = true;
                    }
                    next.extend(out.beliefs);
                }
                Err(e) => {
                    self.failed_steps.push(e);
                    next.push(b.clone());
                }
            }
        }
        let free: Vec<usize> = (0..frame.len()).filter(|&k| !claimed[k]).collect();
        let spawned = if free.len() >= 2 { self.spawn(&frame.subset(&free)) } else { Vec::new() };
        if spawned.is_empty() {
            self.dropped_measurements += free.len();
        }
        next.extend(spawned);
        self.beliefs = next;
        Ok(())
    }

    fn spawn(&self, frame: &MeasurementFrame) -> Vec<StaircaseBelief> {
        let chain = consistent_chain(&frame_to_world(frame));
        if chain.len() < 2 {
            return Vec::new();
        }
        let Ok(b) = initialize_belief(&frame.subset(&chain)) else { return Vec::new() };
        let splits = detect_landing(&b.stairs, self.config.landing_kappa, self.config.landing_floor);
        let parts = if splits.is_empty() { alloc::vec![b] } else { b.split_at(&splits) };
        parts
            .into_iter()
            .filter(|p| {
                let (h, d) = (p.params.height, p.params.depth);
                (HEIGHT_RANGE.0..=HEIGHT_RANGE.1).contains(&h) && (DEPTH_RANGE.0..=DEPTH_RANGE.1).contains(&d)
            })
            .collect()
    }
}

/// Longest run to a flight (a landing included) may span.
const MAX_RUN: f64 = 3.0;

/// Indices of the measurements that form the most regular ascending run.
/// Spurious lines, such as the top edge of an object on a tread, sit off the
/// regular spacing and are left out. Among the longest runs the one whose
/// steps deviate least from the median rise and run wins.
fn consistent_chain(stairs: &[Stair]) -> Vec<usize> {
    let n = stairs.len();
    if n < 2 {
        return (0..n).collect();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| stairs[a].elevation().total_cmp(&stairs[b].elevation()));
    let centers: Vec<[f64; 2]> = order.iter().map(|&i| stairs[i].endpoints.center_xy()).collect();
    let z: Vec<f64> = order.iter().map(|&i| stairs[i].elevation()).collect();
    let up = [centers[n - 1][0] - centers[0][0], centers[n - 1][1] - centers[0][1]];
    let normals: Vec<[f64; 2]> = order.iter().map(|&i| unit(ascending_yaw(&stairs[i].line, up))).collect();
    let run = |a: usize, b: usize| dot2([centers[b][0] - centers[a][0], centers[b][1] - centers[a][1]], normals[a]);
    let (mut rises, mut runs): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
    for a in 0..n - 1 {
        let (dz, dx) = (z[a + 1] - z[a], run(a, a + 1));
        if (HEIGHT_RANGE.0..=HEIGHT_RANGE.1).contains(&dz) && dx > DEPTH_RANGE.0 {
            rises.push(dz);
            runs.push(dx);
        }
    }
    if rises.is_empty() {
        return Vec::new();
    }
    let (h, d) = (math::median(&mut rises), math::median(&mut runs));
    // (length, cost, predecessor) of the best run ending at each stair
    let mut best: Vec<(usize, f64, Option<usize>)> = alloc::vec![(1, 0.0, None); n];
    for b in 1..n {
        for a in 0..b {
            let (dz, dx) = (z[b] - z[a], run(a, b));
            if !(HEIGHT_RANGE.0..=HEIGHT_RANGE.1).contains(&dz) || !(DEPTH_RANGE.0..=MAX_RUN).contains(&dx) {
                continue;
            }
            let cost = best[a].1 + math::sqr((dz - h) / h) + math::sqr((dx - d).min(0.0) / d);
            let len = best[a].0 + 1;
            if len > best[b].0 || (len == best[b].0 && cost < best[b].1) {
                best[b] = (len, cost, Some(a));
            }
        }
    }
    let mut end = 0;
    for b in 1..n {
        if best[b].0 > best[end].0 || (best[b].0 == best[end].0 && best[b].1 < best[end].1) {
            end = b;
        }
    }
    let mut chain = alloc::vec![order[end]];
    let mut at = end;
    while let Some(a) = best[at].2 {
        chain.push(order[a]);
        at = a;
    }
    chain.reverse();
    chain
}
