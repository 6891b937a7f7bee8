// SPDX-License-Identifier: Apache-2.0

//! Versioned JSON documents: scenario specs, ground truth and beliefs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use stairwise_core::nalgebra::DMatrix;
use stairwise_core::sim::{GroundTruth, ScenarioSpec, SCHEMA_VERSION};
use stairwise_core::{Stair, StaircaseBelief, StaircaseParams};

use super::IoError;

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn read_scenario(path: &Path) -> Result<ScenarioSpec, IoError> {
    let spec: ScenarioSpec = read_json(path)?;
    spec.validate().map_err(|e| IoError::Format(format!("{}: {e}", path.display())))?;
    Ok(spec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthDocument {
    pub schema_version: u32,
    pub scenario: String,
    /// Cloud files written next to this document, if any.
    #[serde(default)]
    pub clouds: Vec<String>,
    pub truth: GroundTruth,
}

impl GroundTruthDocument {
    pub fn new(scenario: &str, truth: GroundTruth) -> Self {
        Self { schema_version: SCHEMA_VERSION, scenario: scenario.to_string(), clouds: Vec::new(), truth }
    }
}

/// A belief with its covariance stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefRecord {
    pub frame_id: String,
    pub params: StaircaseParams,
    pub stairs: Vec<Stair>,
    pub covariance: Vec<Vec<f64>>,
}

impl From<&StaircaseBelief> for BeliefRecord {
    fn from(b: &StaircaseBelief) -> Self {
        let c = &b.covariance;
        Self {
            frame_id: b.frame_id.clone(),
            params: b.params,
            stairs: b.stairs.clone(),
            covariance: (0..c.nrows()).map(|i| (0..c.ncols()).map(|j| c[(i, j)]).collect()).collect(),
        }
    }
}

impl TryFrom<BeliefRecord> for StaircaseBelief {
    type Error = IoError;

    fn try_from(r: BeliefRecord) -> Result<Self, IoError> {
        let n = 4 * r.stairs.len();
        if r.covariance.len() != n || r.covariance.iter().any(|row| row.len() != n) {
            return Err(IoError::Format(format!("covariance must be {n} x {n}")));
        }
        let covariance = DMatrix::from_fn(n, n, |i, j| r.covariance[i][j]);
        Ok(StaircaseBelief { stairs: r.stairs, covariance, params: r.params, frame_id: r.frame_id })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefDocument {
    pub schema_version: u32,
    pub beliefs: Vec<BeliefRecord>,
}

impl BeliefDocument {
    pub fn new(beliefs: &[StaircaseBelief]) -> Self {
        Self { schema_version: SCHEMA_VERSION, beliefs: beliefs.iter().map(BeliefRecord::from).collect() }
    }

    pub fn into_beliefs(self) -> Result<Vec<StaircaseBelief>, IoError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(IoError::Format(format!("unsupported belief schema {}", self.schema_version)));
        }
        self.beliefs.into_iter().map(StaircaseBelief::try_from).collect()
    }
}
