use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use rpluw::metrics::MetricsReport;
use rpluw::sim::{run_scenario, RunOutput, SafetyStats, Scenario};

use crate::plan::{ExperimentPlan, SweepPoint};
use crate::CliError;

/// Run one scenario and check the report against the schema.
pub fn run_checked(scenario: &Scenario) -> Result<RunOutput, String> {
    let out = catch_unwind(AssertUnwindSafe(|| run_scenario(scenario)))
        .map_err(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            format!("simulation panicked: {msg}")
        })?
        .map_err(|e| format!("invalid scenario: {e}"))?;
    out.report.validate().map_err(|e| format!("report rejected: {e}"))?;
    Ok(out)
}

/// Write `bytes` to `path` via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub point: usize,
    pub sweep: BTreeMap<String, String>,
    pub seed: u64,
    pub report: MetricsReport,
    pub safety: SafetyStats,
    pub events_processed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub point: usize,
    pub sweep: String,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub run_files: Vec<PathBuf>,
    pub aggregate_csv: PathBuf,
    pub failures: Vec<Failure>,
}

impl ExperimentSummary {
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else {
            1
        }
    }
}

pub fn run_file_name(point: usize, seed: u64) -> String {
    format!("point{point:03}_seed{seed}.json")
}

/// Columns averaged per sweep point: name and accessor.
type Column = (&'static str, fn(&MetricsReport) -> Option<f64>);

const METRICS: &[Column] = &[
    ("pdr_percent", |r| Some(r.pdr_percent)),
    ("altn_s", |r| Some(r.altn_s)),
    ("mean_e2e_delay_s", |r| r.mean_e2e_delay_s),
    ("delay_jitter_s", |r| r.delay_jitter_s),
    ("convergence_time_s", |r| r.convergence_time_s),
    ("first_death_s", |r| r.first_death_s),
    ("median_death_s", |r| r.median_death_s),
    ("alive_node_count", |r| Some(r.alive_node_count as f64)),
    ("control_overhead_packets", |r| Some(r.control_overhead_packets as f64)),
    ("data_sent", |r| Some(r.data_sent as f64)),
    ("data_delivered", |r| Some(r.data_delivered as f64)),
];

/// Mean and sample standard deviation; `None` when there are no values.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt()))
}

fn aggregate_csv(plan: &ExperimentPlan, points: &[SweepPoint], records: &[Option<RunRecord>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = plan.sweeps.iter().map(|(k, _)| k.clone()).collect();
    header.push("runs".into());
    header.push("failed".into());
    for (name, _) in METRICS {
        header.push(format!("{name}_mean"));
        header.push(format!("{name}_std"));
    }
    w.write_record(&header).map_err(|e| CliError::Run(e.to_string()))?;

    let per_point = plan.seeds.len();
    for p in points {
        let runs: Vec<&RunRecord> =
            records[p.index * per_point..(p.index + 1) * per_point].iter().flatten().collect();
        let mut row: Vec<String> = p.assignments.iter().map(|(_, v)| v.clone()).collect();
        row.push(runs.len().to_string());
        row.push((per_point - runs.len()).to_string());
        for (_, get) in METRICS {
            let values: Vec<f64> = runs.iter().filter_map(|r| get(&r.report)).collect();
            match mean_std(&values) {
                Some((m, s)) => {
                    row.push(format!("{m}"));
                    row.push(format!("{s}"));
                }
                None => {
                    row.push(String::new());
                    row.push(String::new());
                }
            }
        }
        w.write_record(&row).map_err(|e| CliError::Run(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Run(e.to_string()))
}

/// Execute every sweep point under every seed on a pool of `jobs` workers.
///
/// Writes `runs/<point>_<seed>.json` per successful run, `aggregate.csv`
/// with one row per sweep point, and `failures.json`. Results are collected
/// in plan order so the outputs do not depend on `jobs`.
pub fn run_experiments(plan: &ExperimentPlan, jobs: usize) -> Result<ExperimentSummary, CliError> {
    let runs_dir = plan.output_dir.join("runs");
    fs::create_dir_all(&runs_dir).map_err(|e| CliError::io(&runs_dir, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Run(e.to_string()))?;

    let points = plan.points();
    let tasks: Vec<(&SweepPoint, u64)> =
        points.iter().flat_map(|p| plan.seeds.iter().map(move |&s| (p, s))).collect();

    let results: Vec<Result<(RunRecord, PathBuf), Failure>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(p, seed)| {
                let fail = |error: String| Failure { point: p.index, sweep: p.label(), seed, error };
                let scenario = Scenario { seed, ..p.scenario.clone() };
                let out = run_checked(&scenario).map_err(fail)?;
                let record = RunRecord {
                    point: p.index,
                    sweep: p.assignments.iter().cloned().collect(),
                    seed,
                    report: out.report,
                    safety: out.safety,
                    events_processed: out.events_processed,
                };
                let path = runs_dir.join(run_file_name(p.index, seed));
                let mut json = serde_json::to_vec_pretty(&record).map_err(|e| fail(e.to_string()))?;
                json.push(b'\n');
                write_atomic(&path, &json).map_err(|e| fail(format!("{}: {e}", path.display())))?;
                Ok((record, path))
            })
            .collect()
    });

    let mut run_files = Vec::new();
    let mut records = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok((rec, path)) => {
                run_files.push(path);
                records.push(Some(rec));
            }
            Err(f) => {
                failures.push(f);
                records.push(None);
            }
        }
    }

    let aggregate = plan.output_dir.join("aggregate.csv");
    let bytes = aggregate_csv(plan, &points, &records)?;
    write_atomic(&aggregate, &bytes).map_err(|e| CliError::io(&aggregate, e))?;

    let manifest = plan.output_dir.join("failures.json");
    let mut json = serde_json::to_vec_pretty(&failures).map_err(|e| CliError::Run(e.to_string()))?;
    json.push(b'\n');
    write_atomic(&manifest, &json).map_err(|e| CliError::io(&manifest, e))?;

    Ok(ExperimentSummary { run_files, aggregate_csv: aggregate, failures })
}
