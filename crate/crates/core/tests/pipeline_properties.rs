use std::collections::BTreeSet;

use occupancy_core::fraudmap::{fraud_map, GridSpec};
use occupancy_core::geostat::{KrigingModel, TrainingPoint, VariogramModel};
use occupancy_core::od::TicketingProfile;
use occupancy_core::synth::{generate, Scenario};
use occupancy_core::unify::{run_pipeline, unify_course, PipelineOutput, RateResolver};
use occupancy_core::{Config, NetworkDataset, ProfileSource};

fn scenario() -> Scenario {
    Scenario {
        n_lines: 4,
        courses_per_line_per_day: 20,
        n_days: 5,
        ..Scenario::default()
    }
}

fn run(s: &Scenario) -> (NetworkDataset, Config, PipelineOutput) {
    let net = generate(s).unwrap();
    let cfg = Config::default();
    let (ds, _) = NetworkDataset::build(net.raw, &cfg).unwrap();
    let out = run_pipeline(&ds, &cfg).unwrap();
    (ds, cfg, out)
}

#[test]
fn one_profile_per_course_and_totals_dominate() {
    let (ds, _, out) = run(&scenario());
    assert_eq!(out.profiles.len(), ds.courses.len());
    let ids: BTreeSet<_> = out.profiles.iter().map(|p| p.course_id()).collect();
    assert_eq!(ids.len(), ds.courses.len());
    for p in &out.profiles {
        for i in 0..p.len() {
            assert!(p.total[i] >= p.ticketing[i]);
            assert_eq!(p.total[i], p.ticketing[i] + p.fraud[i]);
        }
        let measured = p.source == ProfileSource::ApcMeasured;
        assert_eq!(measured, ds.is_covered(p.course_id()));
    }
}

#[test]
fn rerun_is_identical() {
    let (ds, cfg, a) = run(&scenario());
    let b = run_pipeline(&ds, &cfg).unwrap();
    assert_eq!(a.profiles, b.profiles);
    assert_eq!(a.table, b.table);
    assert_eq!(a.kriged_rates, b.kriged_rates);
}

#[test]
fn doubling_ticketing_doubles_unified_totals() {
    let (ds, _, out) = run(&scenario());
    let resolver = RateResolver::new(&out.table, out.kriged_rates.clone());
    for c in ds.courses.values().filter(|c| !ds.is_covered(c.id())) {
        let t = &out.ticketing[c.id()];
        let doubled = TicketingProfile {
            boardings: t.boardings.iter().map(|v| 2 * v).collect(),
            alightings: t.alightings.iter().map(|v| 2 * v).collect(),
            occupancy: t.occupancy.iter().map(|v| 2 * v).collect(),
        };
        let once = unify_course(c, t, &resolver).unwrap();
        let twice = unify_course(c, &doubled, &resolver).unwrap();
        for (a, b) in once.total.iter().zip(&twice.total) {
            assert_eq!(2.0 * a, *b);
        }
    }
}

#[test]
fn line_without_counts_is_unified_with_kriged_rates() {
    let s = scenario();
    let net = generate(&s).unwrap();
    let cfg = Config::default();
    let mut raw = net.raw;
    let l3: BTreeSet<_> = raw
        .courses
        .iter()
        .filter(|(_, c)| c.line_id.as_str() == "L3")
        .map(|(_, c)| c.course_id.clone())
        .collect();
    raw.apc.retain(|(_, r)| !l3.contains(&r.course_id));
    let (ds, _) = NetworkDataset::build(raw, &cfg).unwrap();
    let out = run_pipeline(&ds, &cfg).unwrap();
    assert!(out.table.entries.keys().all(|k| k.line_id.as_str() != "L3"));
    let mut seen = 0;
    for p in out.profiles.iter().filter(|p| p.course.line_id.as_str() == "L3") {
        assert_eq!(p.source, ProfileSource::UnifiedKriged);
        let n = p.len();
        for i in 0..n - 1 {
            let rate = out.kriged_rates[&p.stations[i]];
            assert!((p.fraud[i] - p.ticketing[i] * rate).abs() < 1e-12);
        }
        seen += 1;
    }
    assert_eq!(seen, l3.len());
}

#[test]
fn fraud_map_cell_on_station_reproduces_its_rate() {
    let (_, _, out) = run(&scenario());
    let proj = out.geometry.projection;
    let pts: Vec<TrainingPoint> = out.station_points.iter().map(|(_, p)| *p).collect();
    let k = KrigingModel::new(&pts, VariogramModel::new(0.0, 0.01, 2.0).unwrap()).unwrap();
    for (_, p) in out.station_points.iter().step_by(7) {
        let (lon, lat) = proj.unproject(p.x, p.y);
        let grid = GridSpec {
            lon_min: lon - 1e-3,
            lon_max: lon + 1e-3,
            lat_min: lat - 1e-3,
            lat_max: lat + 1e-3,
            nx: 1,
            ny: 1,
        };
        let cell = fraud_map(&k, &proj, &grid)[0];
        assert!((cell.rate - p.value).abs() < 1e-6, "{} vs {}", cell.rate, p.value);
    }
}
