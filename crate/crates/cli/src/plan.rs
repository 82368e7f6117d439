//! Experiment plans: a scenario file where scalar keys may list several
//! comma-separated values and vector keys may list alternatives separated
//! by `;`. Each listed key becomes a sweep axis.
//!
//! Two extra keys: `seeds` (comma list, `a..=b` ranges allowed; default
//! `1..=10`) and `output_dir` (default `results`).

use std::path::PathBuf;

use rpluw::config::{apply_setting, is_vector_key, parse_lines, ConfigError, SCENARIO_KEYS};
use rpluw::sim::{Scenario, ScenarioError};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub base_scenario: Scenario,
    /// Sweep axes in file order.
    pub sweeps: Vec<(String, Vec<String>)>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

/// One element of the Cartesian product of the sweep axes.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    pub assignments: Vec<(String, String)>,
    pub scenario: Scenario,
}

impl SweepPoint {
    pub fn label(&self) -> String {
        if self.assignments.is_empty() {
            return "base".to_string();
        }
        self.assignments.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
    }
}

pub const DEFAULT_OUTPUT_DIR: &str = "results";

fn default_seeds() -> Vec<u64> {
    (1..=10).collect()
}

fn parse_seeds(v: &str) -> Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for item in v.split(',').map(str::trim) {
        if let Some((a, b)) = item.split_once("..=") {
            let a: u64 = a.trim().parse().map_err(|_| format!("bad seed `{a}`"))?;
            let b: u64 = b.trim().parse().map_err(|_| format!("bad seed `{b}`"))?;
            if a > b {
                return Err(format!("empty seed range `{item}`"));
            }
            out.extend(a..=b);
        } else {
            out.push(item.parse().map_err(|_| format!("bad seed `{item}`"))?);
        }
    }
    if out.is_empty() {
        return Err("seed list is empty".into());
    }
    Ok(out)
}

fn alternatives(key: &str, value: &str) -> Vec<String> {
    let sep = if is_vector_key(key) { ';' } else { ',' };
    value.split(sep).map(|s| s.trim().to_string()).collect()
}

pub fn parse_plan_str(text: &str) -> Result<ExperimentPlan, ConfigError> {
    let mut base = Scenario::default();
    let mut sweeps = Vec::new();
    let mut seeds = default_seeds();
    let mut output_dir = PathBuf::from(DEFAULT_OUTPUT_DIR);

    for (line, key, value) in parse_lines(text)? {
        match key.as_str() {
            "seeds" => {
                seeds = parse_seeds(&value).map_err(|message| ConfigError::Parse { line, message })?;
                continue;
            }
            "output_dir" => {
                if value.is_empty() {
                    return Err(ConfigError::Parse { line, message: "output_dir is empty".into() });
                }
                output_dir = PathBuf::from(value);
                continue;
            }
            "seed" => {
                return Err(ConfigError::Parse { line, message: "plans take `seeds`, not `seed`".into() });
            }
            k if !SCENARIO_KEYS.contains(&k) => return Err(ConfigError::UnknownKey { line, key }),
            _ => {}
        }
        let alts = alternatives(&key, &value);
        for alt in &alts {
            let mut probe = base.clone();
            apply_setting(&mut probe, &key, alt).map_err(|message| ConfigError::Parse { line, message })?;
        }
        if alts.len() == 1 {
            apply_setting(&mut base, &key, &alts[0]).map_err(|message| ConfigError::Parse { line, message })?;
        } else {
            sweeps.push((key, alts));
        }
    }

    let plan = ExperimentPlan { base_scenario: base, sweeps, seeds, output_dir };
    for p in plan.points_unchecked() {
        p.scenario.validate().map_err(|e| {
            if p.assignments.is_empty() {
                ConfigError::Invalid(e)
            } else {
                ConfigError::Invalid(ScenarioError::new(e.field, format!("{} (at {})", e.reason, p.label())))
            }
        })?;
    }
    Ok(plan)
}

impl ExperimentPlan {
    pub fn point_count(&self) -> usize {
        self.sweeps.iter().map(|(_, v)| v.len()).product()
    }

    fn points_unchecked(&self) -> Vec<SweepPoint> {
        let mut points = Vec::with_capacity(self.point_count());
        for index in 0..self.point_count() {
            // mixed-radix digits, last axis varies fastest
            let mut rest = index;
            let mut assignments = vec![(String::new(), String::new()); self.sweeps.len()];
            for (slot, (key, values)) in self.sweeps.iter().enumerate().rev() {
                assignments[slot] = (key.clone(), values[rest % values.len()].clone());
                rest /= values.len();
            }
            let mut scenario = self.base_scenario.clone();
            for (k, v) in &assignments {
                apply_setting(&mut scenario, k, v).expect("checked while parsing");
            }
            points.push(SweepPoint { index, assignments, scenario });
        }
        points
    }

    /// Every sweep point, in row-major order over the axes.
    pub fn points(&self) -> Vec<SweepPoint> {
        self.points_unchecked()
    }

    pub fn run_count(&self) -> usize {
        self.point_count() * self.seeds.len()
    }
}
