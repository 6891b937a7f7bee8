// SPDX-License-Identifier: Apache-2.0

//! File formats, scenario suites, evaluation reports and the command line
//! front end around `stairwise-core`.

pub mod bench;
pub mod cli;
pub mod config;
pub mod io;
pub mod runner;
pub mod scenarios;
pub mod suite;

pub use config::{NoiseProfile, RunConfig};
pub use runner::Method;
pub use suite::{run_suite, ReportFormat, SuiteOptions, SuiteReport};
