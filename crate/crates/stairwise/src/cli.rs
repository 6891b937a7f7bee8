// SPDX-License-Identifier: Apache-2.0

//! Command line: `generate`, `estimate`, `segment`, `suite` and `bench`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use stairwise_core::sim::{simulate, simulate_frames, ScenarioSpec};
use stairwise_core::segmentation::{segment_staircase, tread_mask};
use stairwise_core::{PointCloud, PointLabel, StaircaseBelief};

use crate::bench::{bench_table, run_bench};
use crate::config::{NoiseProfile, RunConfig};
use crate::io::json::{read_json, read_scenario, write_json, BeliefDocument, GroundTruthDocument};
use crate::io::{read_cloud, write_cloud};
use crate::runner::{estimate, score, segmentation_confusion, Method};
use crate::scenarios::{default_suite, landing_scenario, occlusion_scenario, run_seed, segmentation_suite};
use crate::suite::{run_suite, ReportFormat, SuiteOptions, Table, METRICS};

#[derive(Debug, Parser)]
#[command(name = "stairwise", version, about = "Staircase estimation from stair-edge lines, with simulation and evaluation")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Base seed for simulated noise.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Noise level: exact, low, default or high.
    #[arg(long, global = true)]
    pub noise_profile: Option<NoiseProfile>,
    /// Output directory.
    #[arg(long, global = true, default_value = "stairwise_out")]
    pub out_dir: PathBuf,
    /// Report format: csv or text.
    #[arg(long, global = true, default_value = "csv")]
    pub format: ReportFormat,
    /// TOML or JSON file with filter, segmentation, baseline and noise settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Exit with a failure status when any scenario fails.
    #[arg(long, global = true)]
    pub strict: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write scenario files; with --spec, simulate it and write truth, frames and clouds.
    Generate {
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Run estimators over a scenario file.
    Estimate {
        scenario: PathBuf,
        /// Estimator; repeat for several.
        #[arg(long, default_value = "ekf")]
        method: Vec<Method>,
    },
    /// Segment tread points of a cloud with a saved belief.
    Segment {
        #[arg(long)]
        belief: PathBuf,
        #[arg(long)]
        cloud: PathBuf,
    },
    /// Evaluate the methods over a scenario suite and several seeds.
    Suite {
        /// Directory of scenario JSON files; the built-in suite otherwise.
        #[arg(long)]
        scenarios: Option<PathBuf>,
        /// Estimators to run; all by default.
        #[arg(long)]
        method: Vec<Method>,
        /// Seeds per scenario.
        #[arg(long, default_value_t = crate::scenarios::SEEDS_PER_SCENARIO)]
        seeds: u64,
        /// Also simulate clouds and score segmentation.
        #[arg(long)]
        segmentation: bool,
    },
    /// Time the filter step and cloud segmentation.
    Bench {
        #[arg(long, default_value_t = 100)]
        reps: usize,
    },
}

impl Common {
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
            None => RunConfig::default(),
        };
        if let Some(p) = self.noise_profile {
            cfg.profile = p;
        }
        Ok(cfg)
    }
}

/// Parses the process arguments, runs and reports errors on stderr.
pub fn main_entry() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

pub fn run(cli: &Cli) -> Result<ExitCode> {
    let c = &cli.common;
    let cfg = c.run_config()?;
    std::fs::create_dir_all(&c.out_dir).with_context(|| format!("creating {}", c.out_dir.display()))?;
    match &cli.command {
        Command::Generate { spec } => generate(c, &cfg, spec.as_deref()),
        Command::Estimate { scenario, method } => estimate_cmd(c, &cfg, scenario, method),
        Command::Segment { belief, cloud } => segment_cmd(c, &cfg, belief, cloud),
        Command::Suite { scenarios, method, seeds, segmentation } => {
            suite_cmd(c, &cfg, scenarios.as_deref(), method, *seeds, *segmentation)
        }
        Command::Bench { reps } => bench_cmd(c, *reps),
    }
}

fn report_ext(f: ReportFormat) -> &'static str {
    match f {
        ReportFormat::Csv => "csv",
        ReportFormat::Text => "txt",
    }
}

fn write_table(c: &Common, t: &Table) -> Result<PathBuf> {
    let p = c.out_dir.join(format!("{}.{}", t.name, report_ext(c.format)));
    std::fs::write(&p, t.render(c.format)).with_context(|| format!("writing {}", p.display()))?;
    Ok(p)
}

/// Every built-in scenario with its seed fixed.
pub fn builtin_scenarios(seed: u64) -> Vec<ScenarioSpec> {
    let mut all = default_suite();
    all.push(occlusion_scenario(0));
    all.push(landing_scenario(0));
    all.extend(segmentation_suite());
    for (i, s) in all.iter_mut().enumerate() {
        s.seed = run_seed(seed, i, 0);
    }
    all
}

fn generate(c: &Common, cfg: &RunConfig, spec: Option<&Path>) -> Result<ExitCode> {
    let Some(path) = spec else {
        for s in builtin_scenarios(c.seed.unwrap_or(0)) {
            let s = cfg.prepare(&s);
            write_json(&s, &c.out_dir.join(format!("{}.json", s.name)))?;
        }
        println!("wrote built-in scenarios to {}", c.out_dir.display());
        return Ok(ExitCode::SUCCESS);
    };
    let mut s = read_scenario(path)?;
    if let Some(seed) = c.seed {
        s.seed = seed;
    }
    let s = cfg.prepare(&s);
    let sim = simulate(&s).with_context(|| format!("simulating {}", s.name))?;
    let base = c.out_dir.join(&s.name);
    let file = |suffix: &str| PathBuf::from(format!("{}{suffix}", base.display()));
    write_json(&s, &file(".scenario.json"))?;
    write_json(&sim.frames, &file(".frames.json"))?;
    write_cloud(&sim.cloud, &file(".cloud.ply"))?;
    write_cloud(&sim.cloud, &file(".cloud.csv"))?;
    let mut truth = GroundTruthDocument::new(&s.name, sim.truth);
    truth.clouds = vec![format!("{}.cloud.ply", s.name), format!("{}.cloud.csv", s.name)];
    write_json(&truth, &file(".truth.json"))?;
    println!("{}: {} frames, {} cloud points", s.name, sim.frames.len(), sim.cloud.len());
    Ok(ExitCode::SUCCESS)
}

fn estimate_cmd(c: &Common, cfg: &RunConfig, path: &Path, methods: &[Method]) -> Result<ExitCode> {
    let mut s = read_scenario(path)?;
    if let Some(seed) = c.seed {
        s.seed = seed;
    }
    let s = cfg.prepare(&s);
    let (truth, frames, _) = simulate_frames(&s)?;
    let mut header = vec!["method", "stairs", "matched", "missing", "extra"];
    header.extend(METRICS);
    let mut rows = Vec::new();
    let mut failed = false;
    for &m in methods {
        let est = estimate(m, &frames, cfg);
        let sc = score(&est, &truth);
        let trace = Table {
            name: match m {
                Method::Ekf => "trace_ekf",
                Method::Avg => "trace_avg",
                Method::Max => "trace_max",
            },
            header: vec!["frame", "height", "depth", "width", "start_yaw", "end_yaw", "curvature"],
            rows: est
                .trace
                .iter()
                .enumerate()
                .map(|(k, p)| {
                    let mut r = vec![k.to_string()];
                    match p {
                        Some(p) => r.extend(p.to_array().iter().map(|v| format!("{v:.6}"))),
                        None => r.extend(std::iter::repeat_n("nan".to_string(), 6)),
                    }
                    r
                })
                .collect(),
        };
        write_table(c, &trace)?;
        if m == Method::Ekf {
            write_json(&BeliefDocument::new(&est.beliefs), &c.out_dir.join("beliefs.json"))?;
        }
        let l = sc.location;
        let mut r = vec![m.to_string(), est.stairs.len().to_string(), l.matched.to_string(), l.missing.to_string(), l.extra.to_string()];
        match sc.params {
            Some(p) => r.extend([100.0 * p.height, 100.0 * p.depth, 100.0 * p.width, p.curvature_deg].map(|v| format!("{v:.6}"))),
            None => {
                failed = true;
                r.extend(std::iter::repeat_n("nan".to_string(), 4));
            }
        }
        r.extend([100.0 * l.xy_rmse, 100.0 * l.z_rmse, l.orientation_rmse_deg].map(|v| format!("{v:.6}")));
        rows.push(r);
    }
    let t = Table { name: "estimate", header, rows };
    write_table(c, &t)?;
    print!("{}", t.render(ReportFormat::Text));
    Ok(if failed && c.strict { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

fn segment_cmd(c: &Common, cfg: &RunConfig, belief: &Path, cloud_path: &Path) -> Result<ExitCode> {
    let doc: BeliefDocument = read_json(belief)?;
    let beliefs: Vec<StaircaseBelief> = doc.into_beliefs()?;
    let cloud = read_cloud(cloud_path).with_context(|| format!("reading {}", cloud_path.display()))?;
    let mut rows = Vec::new();
    let mut mask = vec![false; cloud.len()];
    for (bi, b) in beliefs.iter().enumerate() {
        let segs = segment_staircase(b, &cloud, &cfg.segmentation);
        for s in &segs {
            rows.push(vec![bi.to_string(), s.stair.to_string(), format!("{:.6}", s.plane_z), s.len().to_string()]);
        }
        for (m, t) in mask.iter_mut().zip(tread_mask(cloud.len(), &segs)) {
            *m |= t;
        }
    }
    write_table(c, &Table { name: "segments", header: vec!["belief", "stair", "plane_z", "points"], rows })?;
    let labelled = PointCloud {
        points: cloud.points.clone(),
        labels: Some(mask.iter().map(|&t| if t { PointLabel::Tread } else { PointLabel::Other }).collect()),
    };
    write_cloud(&labelled, &c.out_dir.join("segmented.ply"))?;
    println!("{} of {} points labelled tread", mask.iter().filter(|m| **m).count(), cloud.len());
    if let Some(conf) = segmentation_confusion(&beliefs, &cloud, cfg) {
        let t = Table {
            name: "segmentation",
            header: vec!["tp", "fp", "tn", "fn", "accuracy", "precision", "recall"],
            rows: vec![vec![
                conf.true_positive.to_string(),
                conf.false_positive.to_string(),
                conf.true_negative.to_string(),
                conf.false_negative.to_string(),
                format!("{:.4}", conf.accuracy()),
                format!("{:.4}", conf.precision()),
                format!("{:.4}", conf.recall()),
            ]],
        };
        write_table(c, &t)?;
        print!("{}", t.render(ReportFormat::Text));
    }
    Ok(ExitCode::SUCCESS)
}

fn load_scenario_dir(dir: &Path) -> Result<Vec<ScenarioSpec>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no scenario files in {}", dir.display());
    }
    paths.iter().map(|p| read_scenario(p).map_err(Into::into)).collect()
}

fn suite_cmd(c: &Common, cfg: &RunConfig, dir: Option<&Path>, methods: &[Method], seeds: u64, segmentation: bool) -> Result<ExitCode> {
    let scenarios = match dir {
        Some(d) => load_scenario_dir(d)?,
        None => default_suite(),
    };
    let opts = SuiteOptions {
        seed: c.seed.unwrap_or(0),
        seeds_per_scenario: seeds,
        methods: if methods.is_empty() { Method::ALL.to_vec() } else { methods.to_vec() },
        segmentation,
        config: *cfg,
    };
    let report = run_suite(&scenarios, &opts);
    report.write(&c.out_dir, c.format)?;
    let summary = report.tables().into_iter().next().expect("summary table");
    print!("{}", summary.render(ReportFormat::Text));
    let failures = report.failures();
    println!("{} runs, {failures} failed, {:.1} s", report.runs.len(), report.elapsed.as_secs_f64());
    Ok(if failures > 0 && c.strict { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

fn bench_cmd(c: &Common, reps: usize) -> Result<ExitCode> {
    let rows = run_bench(reps, &[3, 5, 10, 15, 20]);
    let t = bench_table(&rows);
    write_table(c, &t)?;
    print!("{}", t.render(ReportFormat::Text));
    Ok(ExitCode::SUCCESS)
}
