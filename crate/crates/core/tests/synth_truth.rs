use std::collections::HashMap;

use occupancy_core::od::TripSet;
use occupancy_core::synth::{generate, oracle_rate, FraudField, Scenario};
use occupancy_core::unify::run_pipeline;
use occupancy_core::{Config, NetworkDataset};

fn load(s: &Scenario) -> (occupancy_core::synth::SynthNetwork, NetworkDataset, Config) {
    let net = generate(s).unwrap();
    let cfg = Config::default();
    let (ds, report) = NetworkDataset::build(net.raw.clone(), &cfg).unwrap();
    assert!(report.rejects.is_empty(), "{:?}", &report.rejects[..report.rejects.len().min(3)]);
    (net, ds, cfg)
}

#[test]
fn fraud_boardings_follow_law_of_large_numbers() {
    let s = Scenario {
        n_lines: 1,
        stops_per_line: 11,
        courses_per_line_per_day: 100,
        n_days: 1,
        boarding_rate: 10.0,
        return_share: 0.0,
        fraud: FraudField::uniform(0.1),
        ..Scenario::default()
    };
    let net = generate(&s).unwrap();
    let mut stops = 0usize;
    let mut evaders = 0u64;
    for c in net.truth.courses.values() {
        let n = c.fraud_boardings.len();
        stops += n - 1;
        evaders += c.fraud_boardings[..n - 1].iter().map(|&v| u64::from(v)).sum::<u64>();
    }
    assert_eq!(stops, 1000);
    let mean = evaders as f64 / stops as f64;
    assert!((mean - 1.0).abs() <= 0.1, "{mean}");
}

#[test]
fn chaining_recovers_out_and_back_alightings() {
    let s = Scenario {
        n_lines: 3,
        n_days: 3,
        fraud: FraudField::uniform(0.0),
        return_share: 1.0,
        anonymous_share: 0.0,
        activity_min_s: 600,
        activity_max_s: 1800,
        ..Scenario::default()
    };
    let (net, ds, cfg) = load(&s);
    let trips = TripSet::reconstruct(&ds, cfg.walk_radius_m, cfg.rng_seed);
    let truth: HashMap<_, u32> = net
        .truth
        .trips
        .iter()
        .map(|t| ((t.card_id.clone(), t.course_id.clone(), t.boarding_seq), t.alighting_seq))
        .collect();
    let mut hit = 0;
    for t in &trips.trips {
        let v = &ds.validations[t.validation];
        let key = (v.card_id.clone(), v.course_id.clone(), v.boarding_seq);
        if t.method.is_chained() && truth[&key] == t.alighting_seq {
            hit += 1;
        }
    }
    let share = hit as f64 / net.truth.trips.len() as f64;
    assert!(share >= 0.95, "recovered {share:.3}");
}

#[test]
fn uniform_fraud_rates_converge() {
    // A dense timetable keeps the end-of-day courses, after which no
    // return trip exists, a small share of the chained history.
    let s = Scenario {
        fraud: FraudField::uniform(0.1),
        boarding_rate: 20.0,
        courses_per_line_per_day: 80,
        ..Scenario::default()
    };
    let (_, ds, cfg) = load(&s);
    let out = run_pipeline(&ds, &cfg).unwrap();
    let expected = oracle_rate(0.1);
    let mut checked = 0;
    for (k, e) in &out.table.entries {
        if e.n_courses >= 50 {
            assert!((e.rate - expected).abs() <= 0.02, "{}: {}", k.station_id, e.rate);
            checked += 1;
        }
    }
    assert!(checked > 50);
}
