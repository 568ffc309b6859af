use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn unocc(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unocc"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], out: &Path) -> Output {
    let o = unocc(args, out);
    assert!(
        o.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn small_scenario(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("small.scenario");
    fs::write(
        &path,
        format!("n_lines = 3\nstops_per_line = 8\ncourses_per_line_per_day = 12\nn_days = 3\ncoverage = 0.5\n{extra}"),
    )
    .unwrap();
    path
}

fn synth_small(extra: &str) -> TempDir {
    let dir = TempDir::new().unwrap();
    let s = small_scenario(dir.path(), extra);
    ok(&["synth", "--scenario", s.to_str().unwrap()], dir.path());
    dir
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn bundled_scenario_synth_unify_evaluate() {
    let dir = TempDir::new().unwrap();
    let out = dir.path();
    let scenario = bundled("default.scenario");
    ok(&["synth", "--scenario", scenario.to_str().unwrap()], out);
    ok(&["unify"], out);
    ok(&["evaluate", "--protocol", "holdout30"], out);
    for f in ["occupancies.csv", "trips.csv", "fraud_rates.csv", "variogram.csv", "training_points.csv", "eval_report.csv"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let report = rows(&out.join("eval_report.csv"));
    let all: Vec<_> = report.iter().filter(|r| r[2] == "all").collect();
    assert_eq!(all.len(), 3);
    assert!(all.iter().all(|r| r[0] == "holdout30" && r[3].parse::<f64>().unwrap() > 0.0));
}

#[test]
fn unify_writes_one_row_per_course_stop() {
    let dir = synth_small("");
    ok(&["unify"], dir.path());
    let mut stops: HashMap<(String, String), usize> = HashMap::new();
    for r in rows(&dir.path().join("routes.csv")) {
        *stops.entry((r[0].clone(), r[1].clone())).or_default() += 1;
    }
    let expected: usize = rows(&dir.path().join("courses.csv"))
        .iter()
        .map(|c| stops[&(c[1].clone(), c[2].clone())])
        .sum();
    assert_eq!(rows(&dir.path().join("occupancies.csv")).len(), expected);
}

#[test]
fn unify_without_counts_is_a_data_error() {
    let dir = synth_small("coverage = 0\n");
    let o = unocc(&["unify"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no course carries counting-cell data"));
    assert!(!dir.path().join("occupancies.csv").exists());
}

#[test]
fn fraudmap_after_unify_writes_grid_and_markers() {
    let dir = synth_small("");
    ok(&["unify"], dir.path());
    ok(&["fraudmap", "--resolution", "20"], dir.path());
    let grid = rows(&dir.path().join("fraudmap.csv"));
    assert_eq!(grid.len(), 400);
    for r in &grid {
        let rate: f64 = r[2].parse().unwrap();
        assert!((0.0..=1.0).contains(&rate));
    }
    let geo = fs::read_to_string(dir.path().join("stations.geojson")).unwrap();
    assert!(geo.contains("FeatureCollection") && geo.contains("kriged_rate"));
}

#[test]
fn stages_write_their_own_files() {
    let dir = synth_small("");
    let out = dir.path();
    ok(&["ingest"], out);
    assert!(out.join("rejects.csv").is_file());
    ok(&["reconstruct"], out);
    assert!(out.join("trips.csv").is_file());
    ok(&["rates"], out);
    assert!(out.join("fraud_rates.csv").is_file());
    ok(&["krige"], out);
    assert_eq!(rows(&out.join("variogram.csv")).len(), 1);
    assert!(!out.join("occupancies.csv").exists());
}

#[test]
fn data_directory_can_differ_from_output() {
    let data = synth_small("");
    let out = TempDir::new().unwrap();
    ok(&["unify", "--data", data.path().to_str().unwrap()], out.path());
    assert!(out.path().join("occupancies.csv").is_file());
    assert!(!data.path().join("occupancies.csv").exists());
}

#[test]
fn fixed_seed_reproduces_outputs() {
    let data = synth_small("");
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let d = data.path().to_str().unwrap();
    ok(&["unify", "--seed", "9", "--data", d], a.path());
    ok(&["unify", "--seed", "9", "--data", d], b.path());
    for f in ["trips.csv", "fraud_rates.csv", "occupancies.csv", "variogram.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn seed_flag_overrides_scenario_seed() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let s = small_scenario(a.path(), "");
    let s = s.to_str().unwrap();
    ok(&["synth", "--scenario", s, "--seed", "1"], a.path());
    ok(&["synth", "--scenario", s, "--seed", "2"], b.path());
    assert_ne!(fs::read(a.path().join("afc.csv")).unwrap(), fs::read(b.path().join("afc.csv")).unwrap());
}

#[test]
fn sweep_on_fully_counted_line() {
    let dir = TempDir::new().unwrap();
    let scenario = bundled("sweep.scenario");
    ok(&["synth", "--scenario", scenario.to_str().unwrap()], dir.path());
    ok(&["sweep", "--line", "L1", "--repeats", "3"], dir.path());
    let points = rows(&dir.path().join("sweep.csv"));
    assert_eq!(points.len(), 99);
    assert!(points.iter().all(|p| p[0] == "L1" && p[5] == "3"));
}

#[test]
fn usage_errors_exit_2_with_schema_help() {
    let dir = TempDir::new().unwrap();
    let bad_config = dir.path().join("bad.conf");
    fs::write(&bad_config, "no_such_key = 1\n").unwrap();
    let cases: [&[&str]; 4] = [
        &["frobnicate"],
        &["evaluate", "--protocol", "nope"],
        &["sweep"],
        &["unify", "--config", bad_config.to_str().unwrap()],
    ];
    for args in cases {
        let o = unocc(args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains("afc.csv") && err.contains("card_id,timestamp"), "{args:?}: {err}");
    }
}

#[test]
fn missing_inputs_are_a_data_error() {
    let dir = TempDir::new().unwrap();
    let o = unocc(&["ingest"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("stations.csv"));
}
