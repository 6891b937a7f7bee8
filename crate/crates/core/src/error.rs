// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("degenerate staircase: {0}")]
    DegenerateStaircase(&'static str),
    #[error("at least two stairs are required, got {0}")]
    TooFewStairs(usize),
    #[error("innovation covariance for stair {0} is not invertible")]
    SingularCovariance(usize),
    #[error("stacked innovation covariance is not invertible")]
    SingularInnovationCovariance,
    #[error("crop-box holds {found} points, need at least {required}")]
    InsufficientPoints { found: usize, required: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid scenario: {0}")]
    InvalidScenario(&'static str),
}
