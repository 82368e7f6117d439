use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rpluw_cli::{load_plan, run_experiments};

fn rpluw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rpluw")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SHORT: &str = "sim_duration_s = 60\nnode_count = 20\n";

#[test]
fn validate_fills_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "empty.conf", "");
    let out = rpluw(&["validate", s(&f)]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("node_count = 50"));
    assert!(text.contains("packet_rate_pps = 0.1"));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.conf", "mobile_fraction = 1.5\n");
    let out = rpluw(&["validate", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mobile_fraction"));

    let unknown = write(dir.path(), "unknown.conf", "# header\nwarp_drive = 9\n");
    let out = rpluw(&["run", s(&unknown)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let out = rpluw(&["run", s(&dir.path().join("missing.conf"))]);
    assert_eq!(out.status.code(), Some(2));

    let plan = write(dir.path(), "plan.conf", "packet_rate_pps = 0.1, -1\n");
    assert_eq!(rpluw(&["sweep", s(&plan)]).status.code(), Some(2));
}

#[test]
fn run_prints_report_and_seed_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "a.conf", &format!("{SHORT}seed = 4\n"));
    let a = rpluw(&["run", s(&f)]);
    assert_eq!(a.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert!(report["pdr_percent"].as_f64().is_some());
    assert!(report["per_node_energy_j"].as_object().unwrap().len() == 20);

    let again = rpluw(&["run", s(&f), "--seed", "4"]);
    assert_eq!(a.stdout, again.stdout);
    let other = rpluw(&["run", s(&f), "--seed", "5"]);
    assert_ne!(a.stdout, other.stdout);

    let out = dir.path().join("report.json");
    assert_eq!(rpluw(&["run", s(&f), "--out", s(&out)]).status.code(), Some(0));
    assert_eq!(fs::read(&out).unwrap(), a.stdout);
}

#[test]
fn trace_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "t.conf", SHORT);
    let a = rpluw(&["trace", s(&f), "--seed", "3"]);
    let b = rpluw(&["trace", s(&f), "--seed", "3"]);
    assert_eq!(a.status.code(), Some(0));
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout);
    let file = dir.path().join("trace.csv");
    rpluw(&["trace", s(&f), "--seed", "3", "--out", s(&file)]);
    assert_eq!(fs::read(&file).unwrap(), a.stdout);
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let mut rows = vec![r.headers().unwrap().iter().map(String::from).collect()];
    rows.extend(r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()));
    rows
}

#[test]
fn sweep_counts_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write(dir.path(), "plan.conf", &format!("{SHORT}packet_rate_pps = 0.1, 0.2\n"));
    let out1 = dir.path().join("one");
    let out2 = dir.path().join("two");
    let r1 = rpluw(&["sweep", s(&plan), "--out", s(&out1), "--jobs", "1"]);
    assert_eq!(r1.status.code(), Some(0), "{}", String::from_utf8_lossy(&r1.stderr));
    let r2 = rpluw(&["sweep", s(&plan), "--out", s(&out2), "--jobs", "4"]);
    assert_eq!(r2.status.code(), Some(0));

    assert_eq!(fs::read_dir(out1.join("runs")).unwrap().count(), 20);
    let rows = csv_rows(&out1.join("aggregate.csv"));
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][0], "packet_rate_pps");
    assert_eq!(rows[1][0], "0.1");
    assert_eq!(rows[2][0], "0.2");
    assert_eq!(rows[1][1], "10");

    assert_eq!(fs::read(out1.join("aggregate.csv")).unwrap(), fs::read(out2.join("aggregate.csv")).unwrap());
    for entry in fs::read_dir(out1.join("runs")).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(
            fs::read(out1.join("runs").join(&name)).unwrap(),
            fs::read(out2.join("runs").join(&name)).unwrap()
        );
    }
    assert_eq!(fs::read_to_string(out1.join("failures.json")).unwrap().trim(), "[]");

    let r3 = rpluw(&["sweep", s(&plan), "--out", s(&out1), "--jobs", "2"]);
    assert_eq!(r3.status.code(), Some(0));
    assert_eq!(fs::read(out1.join("aggregate.csv")).unwrap(), fs::read(out2.join("aggregate.csv")).unwrap());
}

#[test]
fn mode_sweep_rows_tagged_by_mode() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{SHORT}mode = RPLUW, RPLUWM\nseeds = 1, 2\noutput_dir = {}\n", s(&dir.path().join("o")));
    let plan = load_plan(&write(dir.path(), "plan.conf", &text)).unwrap();
    let summary = run_experiments(&plan, 2).unwrap();
    assert_eq!(summary.exit_code(), 0);
    assert_eq!(summary.run_files.len(), 4);
    let rows = csv_rows(&summary.aggregate_csv);
    assert_eq!(rows[0][0], "mode");
    assert_eq!((rows[1][0].as_str(), rows[2][0].as_str()), ("RPLUW", "RPLUWM"));
}

#[test]
fn failed_runs_are_reported_and_others_kept() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let plan = write(dir.path(), "plan.conf", &format!("{SHORT}seeds = 1..=3\n"));
    // a directory where a run file should go makes that run's rename fail
    fs::create_dir_all(out.join("runs").join("point000_seed2.json").join("blocker")).unwrap();
    let r = rpluw(&["sweep", s(&plan), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(1));
    assert!(out.join("runs/point000_seed1.json").is_file());
    assert!(out.join("runs/point000_seed3.json").is_file());
    let failures: serde_json::Value = serde_json::from_slice(&fs::read(out.join("failures.json")).unwrap()).unwrap();
    assert_eq!(failures.as_array().unwrap().len(), 1);
    assert_eq!(failures[0]["seed"], 2);
    let rows = csv_rows(&out.join("aggregate.csv"));
    assert_eq!(rows.len(), 2);
    assert_eq!((rows[1][0].as_str(), rows[1][1].as_str()), ("2", "1"));
}
