// SPDX-License-Identifier: Apache-2.0

//! Multi-scenario, multi-seed evaluation and its reports.
//!
//! Per scenario every metric is an RMSE over seeds; the summary is the mean
//! and sample standard deviation of those RMSEs over scenarios. Lengths are
//! reported in cm and angles in degrees. Wall-clock timings go to their own
//! file so that the metric reports are reproducible byte for byte.

use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;
use stairwise_core::metrics::Confusion;
use stairwise_core::sim::ScenarioSpec;

use crate::config::RunConfig;
use crate::runner::{run_scenario, Method, Score};
use crate::scenarios::run_seed;

pub const METRICS: [&str; 7] = ["height_cm", "depth_cm", "width_cm", "curvature_deg", "xy_cm", "z_cm", "orientation_deg"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Csv,
    Text,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "text" | "txt" => Ok(Self::Text),
            _ => Err(format!("unknown format {s:?} (csv, text)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    pub seed: u64,
    pub seeds_per_scenario: u64,
    pub methods: Vec<Method>,
    /// Simulate clouds and segment them with the EKF belief.
    pub segmentation: bool,
    pub config: RunConfig,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            seeds_per_scenario: crate::scenarios::SEEDS_PER_SCENARIO,
            methods: Method::ALL.to_vec(),
            segmentation: false,
            config: RunConfig::default(),
        }
    }
}

/// Metric values of one run, in report units; `None` where not available.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub scenario: String,
    pub rep: u64,
    pub seed: u64,
    pub method: Method,
    pub error: Option<String>,
    pub metrics: [Option<f64>; 7],
    pub matched: usize,
    pub missing: usize,
    pub extra: usize,
    pub failed_steps: usize,
}

impl RunRecord {
    fn from_score(scenario: &str, rep: u64, seed: u64, method: Method, s: &Score, failed_steps: usize) -> Self {
        let l = &s.location;
        let has_loc = l.matched > 0;
        let p = s.params;
        let loc = |v: f64| has_loc.then_some(v);
        Self {
            scenario: scenario.to_string(),
            rep,
            seed,
            method,
            error: None,
            metrics: [
                p.map(|p| 100.0 * p.height),
                p.map(|p| 100.0 * p.depth),
                p.map(|p| 100.0 * p.width),
                p.map(|p| p.curvature_deg),
                loc(100.0 * l.xy_rmse),
                loc(100.0 * l.z_rmse),
                loc(l.orientation_rmse_deg),
            ],
            matched: l.matched,
            missing: l.missing,
            extra: l.extra,
            failed_steps,
        }
    }

    fn failed(scenario: &str, rep: u64, seed: u64, method: Method, error: String) -> Self {
        Self {
            scenario: scenario.to_string(),
            rep,
            seed,
            method,
            error: Some(error),
            metrics: [None; 7],
            matched: 0,
            missing: 0,
            extra: 0,
            failed_steps: 0,
        }
    }

    /// A run counts as failed when it errored or produced no estimate.
    pub fn is_failure(&self) -> bool {
        self.error.is_some() || self.metrics.iter().any(Option::is_none)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioSummary {
    pub scenario: String,
    pub method: Method,
    /// RMSE over the successful seeds.
    pub rmse: [Option<f64>; 7],
    pub runs: usize,
    pub failures: usize,
    pub mean_missing: f64,
    pub mean_extra: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub mean: [Option<f64>; 7],
    pub std: [Option<f64>; 7],
    pub scenarios: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SegmentationRecord {
    pub scenario: String,
    pub rep: u64,
    pub confusion: Confusion,
}

#[derive(Debug, Clone)]
pub struct TimingRecord {
    pub scenario: String,
    pub rep: u64,
    pub method: Method,
    pub steps: usize,
    pub median_step: Duration,
    pub total: Duration,
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub runs: Vec<RunRecord>,
    pub scenarios: Vec<ScenarioSummary>,
    pub summary: Vec<MethodSummary>,
    pub segmentation: Vec<SegmentationRecord>,
    pub timing: Vec<TimingRecord>,
    pub elapsed: Duration,
}

impl SuiteReport {
    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.is_failure()).count()
    }

    pub fn method_summary(&self, m: Method) -> Option<&MethodSummary> {
        self.summary.iter().find(|s| s.method == m)
    }

    pub fn segmentation_total(&self) -> Confusion {
        let mut c = Confusion::default();
        for r in &self.segmentation {
            c.add(&r.confusion);
        }
        c
    }
}

struct JobOutput {
    runs: Vec<RunRecord>,
    timing: Vec<TimingRecord>,
    segmentation: Option<SegmentationRecord>,
}

fn median(mut v: Vec<Duration>) -> Duration {
    if v.is_empty() {
        return Duration::ZERO;
    }
    v.sort_unstable();
    v[v.len() / 2]
}

fn run_job(spec: &ScenarioSpec, index: usize, rep: u64, opts: &SuiteOptions) -> JobOutput {
    let seed = run_seed(opts.seed, index, rep);
    let mut s = spec.clone();
    s.seed = seed;
    let name = spec.name.as_str();
    let result = catch_unwind(AssertUnwindSafe(|| run_scenario(&s, &opts.methods, opts.segmentation, &opts.config)));
    let run = match result {
        Ok(Ok(r)) => r,
        Ok(Err(e)) => return failed_job(name, rep, seed, &opts.methods, e.to_string()),
        Err(_) => return failed_job(name, rep, seed, &opts.methods, "estimator panicked".into()),
    };
    let mut runs = Vec::new();
    let mut timing = Vec::new();
    for (est, score) in &run.estimates {
        runs.push(RunRecord::from_score(name, rep, seed, est.method, score, est.failed_steps));
        timing.push(TimingRecord {
            scenario: name.to_string(),
            rep,
            method: est.method,
            steps: est.step_times.len(),
            median_step: median(est.step_times.clone()),
            total: est.step_times.iter().sum(),
        });
    }
    let segmentation = run.segmentation.map(|confusion| SegmentationRecord { scenario: name.to_string(), rep, confusion });
    JobOutput { runs, timing, segmentation }
}

fn failed_job(name: &str, rep: u64, seed: u64, methods: &[Method], error: String) -> JobOutput {
    JobOutput {
        runs: methods.iter().map(|&m| RunRecord::failed(name, rep, seed, m, error.clone())).collect(),
        timing: Vec::new(),
        segmentation: None,
    }
}

fn rmse(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v * v;
        n += 1;
    }
    (n > 0).then(|| (sum / n as f64).sqrt())
}

fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (Some(mean), Some(std))
}

pub fn run_suite(scenarios: &[ScenarioSpec], opts: &SuiteOptions) -> SuiteReport {
    let start = Instant::now();
    let jobs: Vec<(usize, u64)> = (0..scenarios.len()).flat_map(|i| (0..opts.seeds_per_scenario).map(move |r| (i, r))).collect();
    // collect keeps job order, so the reports do not depend on scheduling
    let outputs: Vec<JobOutput> = jobs.par_iter().map(|&(i, r)| run_job(&scenarios[i], i, r, opts)).collect();
    let mut runs = Vec::new();
    let mut timing = Vec::new();
    let mut segmentation = Vec::new();
    for o in outputs {
        runs.extend(o.runs);
        timing.extend(o.timing);
        segmentation.extend(o.segmentation);
    }

    let mut summaries = Vec::new();
    for spec in scenarios {
        for &m in &opts.methods {
            let rs: Vec<&RunRecord> = runs.iter().filter(|r| r.scenario == spec.name && r.method == m).collect();
            let ok: Vec<&&RunRecord> = rs.iter().filter(|r| !r.is_failure()).collect();
            let mut out = [None; 7];
            for (k, slot) in out.iter_mut().enumerate() {
                *slot = rmse(ok.iter().filter_map(|r| r.metrics[k]));
            }
            let n = ok.len().max(1) as f64;
            summaries.push(ScenarioSummary {
                scenario: spec.name.clone(),
                method: m,
                rmse: out,
                runs: rs.len(),
                failures: rs.len() - ok.len(),
                mean_missing: ok.iter().map(|r| r.missing as f64).sum::<f64>() / n,
                mean_extra: ok.iter().map(|r| r.extra as f64).sum::<f64>() / n,
            });
        }
    }

    let summary = opts
        .methods
        .iter()
        .map(|&m| {
            let rows: Vec<&ScenarioSummary> = summaries.iter().filter(|s| s.method == m).collect();
            let mut mean = [None; 7];
            let mut std = [None; 7];
            for k in 0..7 {
                let vals: Vec<f64> = rows.iter().filter_map(|r| r.rmse[k]).collect();
                (mean[k], std[k]) = mean_std(&vals);
            }
            MethodSummary {
                method: m,
                mean,
                std,
                scenarios: rows.len(),
                failures: rows.iter().map(|r| r.failures).sum(),
            }
        })
        .collect();

    SuiteReport { runs, scenarios: summaries, summary, segmentation, timing, elapsed: start.elapsed() }
}

fn num(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.6}"),
        None => "nan".to_string(),
    }
}

fn csv_text(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn text_table(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in &rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(header.to_vec(), &mut out);
    for r in &rows {
        line(r.iter().map(String::as_str).collect(), &mut out);
    }
    out
}

/// One rendered table.
pub struct Table {
    pub name: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Csv => csv_text(&self.header, self.rows.clone()),
            ReportFormat::Text => text_table(&self.header, self.rows.clone()),
        }
    }
}

impl SuiteReport {
    /// The deterministic report tables.
    pub fn tables(&self) -> Vec<Table> {
        let mut tables = Vec::new();

        let mut header = vec!["method", "scenarios", "failures"];
        // mean and std columns interleaved per metric
        const STD: [&str; 7] = ["height_cm_std", "depth_cm_std", "width_cm_std", "curvature_deg_std", "xy_cm_std", "z_cm_std", "orientation_deg_std"];
        for (m, s) in METRICS.iter().zip(STD) {
            header.push(m);
            header.push(s);
        }
        let rows = self
            .summary
            .iter()
            .map(|s| {
                let mut r = vec![s.method.to_string(), s.scenarios.to_string(), s.failures.to_string()];
                for k in 0..7 {
                    r.push(num(s.mean[k]));
                    r.push(num(s.std[k]));
                }
                r
            })
            .collect();
        tables.push(Table { name: "summary", header, rows });

        let mut header = vec!["scenario", "method", "runs", "failures", "mean_missing", "mean_extra"];
        header.extend(METRICS);
        let rows = self
            .scenarios
            .iter()
            .map(|s| {
                let mut r = vec![
                    s.scenario.clone(),
                    s.method.to_string(),
                    s.runs.to_string(),
                    s.failures.to_string(),
                    format!("{:.3}", s.mean_missing),
                    format!("{:.3}", s.mean_extra),
                ];
                r.extend(s.rmse.iter().map(|v| num(*v)));
                r
            })
            .collect();
        tables.push(Table { name: "scenarios", header, rows });

        let mut header = vec!["scenario", "rep", "seed", "method", "matched", "missing", "extra", "failed_steps"];
        header.extend(METRICS);
        header.push("error");
        let rows = self
            .runs
            .iter()
            .map(|r| {
                let mut row = vec![
                    r.scenario.clone(),
                    r.rep.to_string(),
                    r.seed.to_string(),
                    r.method.to_string(),
                    r.matched.to_string(),
                    r.missing.to_string(),
                    r.extra.to_string(),
                    r.failed_steps.to_string(),
                ];
                row.extend(r.metrics.iter().map(|v| num(*v)));
                row.push(r.error.clone().unwrap_or_default());
                row
            })
            .collect();
        tables.push(Table { name: "runs", header, rows });

        if !self.segmentation.is_empty() {
            let header = vec!["scenario", "rep", "tp", "fp", "tn", "fn", "accuracy", "precision", "recall"];
            let mut rows: Vec<Vec<String>> = self
                .segmentation
                .iter()
                .map(|s| confusion_row(s.scenario.clone(), s.rep.to_string(), &s.confusion))
                .collect();
            rows.push(confusion_row("all".into(), "-".into(), &self.segmentation_total()));
            tables.push(Table { name: "segmentation", header, rows });
        }
        tables
    }

    pub fn timing_table(&self) -> Table {
        let header = vec!["scenario", "rep", "method", "steps", "median_step_ms", "total_ms"];
        let mut rows: Vec<Vec<String>> = self
            .timing
            .iter()
            .map(|t| {
                vec![
                    t.scenario.clone(),
                    t.rep.to_string(),
                    t.method.to_string(),
                    t.steps.to_string(),
                    format!("{:.4}", t.median_step.as_secs_f64() * 1e3),
                    format!("{:.4}", t.total.as_secs_f64() * 1e3),
                ]
            })
            .collect();
        rows.push(vec!["all".into(), "-".into(), "-".into(), "-".into(), "-".into(), format!("{:.4}", self.elapsed.as_secs_f64() * 1e3)]);
        Table { name: "timing", header, rows }
    }

    /// Writes every table as `<name>.csv` or `<name>.txt`; returns the paths.
    pub fn write(&self, dir: &Path, format: ReportFormat) -> std::io::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let ext = match format {
            ReportFormat::Csv => "csv",
            ReportFormat::Text => "txt",
        };
        let mut paths = Vec::new();
        for t in self.tables().into_iter().chain(std::iter::once(self.timing_table())) {
            let p = dir.join(format!("{}.{ext}", t.name));
            std::fs::write(&p, t.render(format))?;
            paths.push(p);
        }
        Ok(paths)
    }
}

fn confusion_row(a: String, b: String, c: &Confusion) -> Vec<String> {
    vec![
        a,
        b,
        c.true_positive.to_string(),
        c.false_positive.to_string(),
        c.true_negative.to_string(),
        c.false_negative.to_string(),
        format!("{:.4}", c.accuracy()),
        format!("{:.4}", c.precision()),
        format!("{:.4}", c.recall()),
    ]
}
