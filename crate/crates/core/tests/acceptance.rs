//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line for
//! each and exits non-zero if any failed.

use std::collections::BTreeSet;
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use occupancy_core::eval::{coverage_sweep, holdout_30, spearman, wmape, EvalContext, Method};
use occupancy_core::geostat::{fit_exponential, KrigingModel, TrainingPoint, VariogramBin, VariogramModel};
use occupancy_core::occupancy::occupancy_from_flows;
use occupancy_core::synth::{generate, oracle_rates, Scenario, SynthNetwork};
use occupancy_core::unify::run_pipeline;
use occupancy_core::{Config, LineId, NetworkDataset, ProfileSource};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn occupancy_arithmetic() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.random_range(2..40usize);
        let (mut y, mut z) = (vec![0u32; n], vec![0u32; n]);
        for _ in 0..rng.random_range(0..200) {
            let b = rng.random_range(0..n - 1);
            let a = rng.random_range(b + 1..n);
            y[b] += 1;
            z[a] += 1;
        }
        let got = occupancy_from_flows(&y, &z).expect("balanced flows");
        for i in 0..n {
            let mut brute = 0i64;
            for j in 0..=i {
                brute += i64::from(y[j]) - i64::from(z[j]);
            }
            if i64::from(got[i]) != brute {
                mismatches += 1;
            }
        }
    }
    outcome(mismatches == 0, format!("{mismatches} mismatching entries"))
}

fn dense_kriging(points: &[TrainingPoint], v: &VariogramModel, x: f64, y: f64) -> (Vec<f64>, f64) {
    let n = points.len();
    let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
    let mut b = DVector::<f64>::zeros(n + 1);
    for i in 0..n {
        for j in 0..n {
            let h = points[i].distance_to(points[j].x, points[j].y);
            a[(i, j)] = if i == j { 0.0 } else { v.gamma(h) };
        }
        a[(i, n)] = 1.0;
        a[(n, i)] = 1.0;
        b[i] = v.gamma(points[i].distance_to(x, y));
    }
    b[n] = 1.0;
    let sol = a.lu().solve(&b).expect("non-singular");
    let w: Vec<f64> = sol.iter().take(n).copied().collect();
    let pred = w.iter().zip(points).map(|(w, p)| w * p.value).sum();
    (w, pred)
}

fn kriging_solver() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_pred, mut worst_sum, mut worst_interp) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..50 {
        let n = rng.random_range(3..=30);
        let pts: Vec<TrainingPoint> = (0..n)
            .map(|_| {
                TrainingPoint::new(
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-5.0..5.0),
                    rng.random_range(0.0..0.5),
                )
            })
            .collect();
        let v = VariogramModel::new(
            rng.random_range(0.0..0.02),
            rng.random_range(0.005..0.05),
            rng.random_range(0.3..6.0),
        )
        .unwrap();
        let model = KrigingModel::new(&pts, v).unwrap();
        for _ in 0..5 {
            let (x, y) = (rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0));
            let (w, _) = model.weights(x, y);
            let (w_ref, p_ref) = dense_kriging(&pts, &v, x, y);
            for (a, b) in w.iter().zip(&w_ref) {
                worst_pred = worst_pred.max((a - b).abs());
            }
            worst_pred = worst_pred.max((model.predict(x, y).raw - p_ref).abs());
            worst_sum = worst_sum.max((w.iter().sum::<f64>() - 1.0).abs());
        }
        let exact = VariogramModel::new(0.0, v.sill, v.range_km).unwrap();
        let model = KrigingModel::new(&pts, exact).unwrap();
        for p in &pts {
            worst_interp = worst_interp.max((model.predict(p.x, p.y).raw - p.value).abs());
        }
    }
    outcome(
        worst_pred < 1e-8 && worst_sum < 1e-10 && worst_interp < 1e-8,
        format!(
            "max |Δ| vs dense solve {worst_pred:.2e}, max |Σw−1| {worst_sum:.2e}, max interpolation error {worst_interp:.2e}"
        ),
    )
}

fn variogram_fit() -> Outcome {
    let truth = VariogramModel::new(0.01, 0.04, 2.0).unwrap();
    let max_dist = 6.0;
    let bins: Vec<VariogramBin> = (0..12)
        .map(|k| {
            let h_mid = (k as f64 + 0.5) * max_dist / 12.0;
            VariogramBin {
                h_mid,
                gamma: truth.gamma(h_mid),
                pairs: 20 + k,
            }
        })
        .collect();
    let fit = fit_exponential(&bins, max_dist).unwrap().model;
    let err = (fit.nugget - 0.01)
        .abs()
        .max((fit.sill - 0.04).abs())
        .max((fit.range_km - 2.0).abs());
    outcome(
        err < 1e-3,
        format!(
            "nugget {:.5}, sill {:.5}, range {:.5} km, max error {err:.1e}",
            fit.nugget, fit.sill, fit.range_km
        ),
    )
}

struct Shared {
    net: SynthNetwork,
    ds: NetworkDataset,
    cfg: Config,
    build_time: Duration,
}

fn consistency_network() -> Shared {
    let t0 = Instant::now();
    let net = generate(&Scenario::default()).expect("valid scenario");
    let cfg = Config::default();
    let (ds, _) = NetworkDataset::build(net.raw.clone(), &cfg).expect("loads");
    Shared {
        net,
        ds,
        cfg,
        build_time: t0.elapsed(),
    }
}

fn estimator_consistency(s: &Shared) -> Outcome {
    let t0 = Instant::now();
    let out = run_pipeline(&s.ds, &s.cfg).expect("pipeline runs");
    let oracle = oracle_rates(&s.net.truth);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (key, entry) in &out.table.entries {
        if entry.n_courses >= 30 {
            worst = worst.max((entry.rate - oracle[&key.station_id]).abs());
            checked += 1;
        }
    }
    let elapsed = s.build_time + t0.elapsed();
    outcome(
        checked > 0 && worst <= 0.05 && elapsed < Duration::from_secs(60),
        format!(
            "{checked} entries with >= 30 courses, max |rate - oracle| {worst:.4}, {:.1} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn head_to_head(s: &Shared) -> Outcome {
    let ctx = EvalContext::new(&s.ds, &s.cfg).expect("covered dataset");
    let report = holdout_30(&ctx, 42).expect("holdout runs");
    let get = |m| report.row(m, "all").map(|r| r.wmape).unwrap_or(f64::NAN);
    let (mean, kriged, ctxavg) = (
        get(Method::MeanRate),
        get(Method::Kriged),
        get(Method::ContextualAverage),
    );
    outcome(
        mean < ctxavg && kriged < ctxavg,
        format!(
            "wMAPE mean-rate {:.2}%, kriged with own line left out {:.2}%, contextual average {:.2}% on {} held-out courses",
            100.0 * mean,
            100.0 * kriged,
            100.0 * ctxavg,
            report.row(Method::MeanRate, "all").map_or(0, |r| r.n_courses)
        ),
    )
}

fn dominance(s: &Shared) -> Outcome {
    let out = run_pipeline(&s.ds, &s.cfg).expect("pipeline runs");
    let mut unified = 0;
    let mut violations = 0;
    for p in &out.profiles {
        if matches!(p.source, ProfileSource::UnifiedMeanRate | ProfileSource::UnifiedKriged) {
            unified += 1;
            violations += p.total.iter().zip(&p.ticketing).filter(|(o, v)| o < v).count();
        }
    }
    outcome(
        unified > 0 && violations == 0,
        format!("{violations} violations over {unified} unified courses"),
    )
}

fn coverage_sweep_shape() -> Outcome {
    let t0 = Instant::now();
    let scenario = Scenario {
        n_lines: 1,
        courses_per_line_per_day: 50,
        n_days: 2,
        coverage: 1.0,
        ..Scenario::default()
    };
    let net = generate(&scenario).unwrap();
    let cfg = Config::default();
    let (ds, _) = NetworkDataset::build(net.raw, &cfg).unwrap();
    let ctx = EvalContext::new(&ds, &cfg).unwrap();
    let line = LineId::from("L1");
    let pts = coverage_sweep(&ctx, &line, cfg.sweep_step, cfg.sweep_repeats, 42).unwrap();
    let cov: Vec<f64> = pts.iter().map(|p| p.coverage).collect();
    let err: Vec<f64> = pts.iter().map(|p| p.wmape).collect();
    let rho = spearman(&cov, &err);
    let at = |c: f64| {
        pts.iter()
            .find(|p| (p.coverage - c).abs() < 1e-9)
            .map_or(f64::NAN, |p| p.wmape)
    };
    let (full, ten) = (at(0.99), at(0.10));
    let elapsed = t0.elapsed();
    outcome(
        pts.len() == 99 && rho < -0.8 && ten <= 2.0 * full && elapsed < Duration::from_secs(120),
        format!(
            "{} points, Spearman {rho:.3}, wMAPE {:.2}% at 99% vs {:.2}% at 10% coverage, {:.1} s",
            pts.len(),
            100.0 * full,
            100.0 * ten,
            elapsed.as_secs_f64()
        ),
    )
}

fn files_equal(a: &Path, b: &Path) -> bool {
    let names = |d: &Path| -> BTreeSet<_> {
        std::fs::read_dir(d)
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect()
    };
    let (na, nb) = (names(a), names(b));
    na == nb
        && na
            .iter()
            .all(|n| std::fs::read(a.join(n)).unwrap() == std::fs::read(b.join(n)).unwrap())
}

fn totality_and_determinism(s: &Shared) -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut profiles_ok = true;
    for d in &dirs {
        let out = run_pipeline(&s.ds, &s.cfg).expect("pipeline runs");
        let ids: BTreeSet<_> = out.profiles.iter().map(|p| p.course_id().clone()).collect();
        profiles_ok &= out.profiles.len() == s.ds.courses.len() && ids.len() == s.ds.courses.len();
        out.write_dir(d.path()).unwrap();
    }
    let identical = files_equal(dirs[0].path(), dirs[1].path());
    outcome(
        profiles_ok && identical,
        format!(
            "one profile per course: {profiles_ok}, {} courses, byte-identical outputs: {identical}",
            s.ds.courses.len()
        ),
    )
}

fn wmape_contract() -> Outcome {
    let exact = wmape(&[4.0, 6.0], &[5.0, 6.0]).unwrap() == 0.1;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(1..50);
        let o: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..80.0)).collect();
        let e: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..80.0)).collect();
        let k = rng.random_range(0.01..100.0);
        let ko: Vec<f64> = o.iter().map(|v| v * k).collect();
        let ke: Vec<f64> = e.iter().map(|v| v * k).collect();
        worst = worst.max((wmape(&ko, &ke).unwrap() - wmape(&o, &e).unwrap()).abs());
    }
    outcome(
        exact && worst <= 1e-12,
        format!("wmape([4,6],[5,6]) == 0.1: {exact}, max scale deviation {worst:.1e}"),
    )
}

fn main() {
    // cargo passes harness flags such as --list; nothing to list here
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut failed = 0;
    let mut report = |n: usize, name: &str, f: &dyn Fn() -> Outcome| {
        let t0 = Instant::now();
        let o = f();
        println!(
            "acceptance {n} {name}: {} ({}) [{:.2} s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t0.elapsed().as_secs_f64()
        );
        if !o.pass {
            failed += 1;
        }
    };
    report(1, "occupancy arithmetic", &occupancy_arithmetic);
    report(2, "kriging solver", &kriging_solver);
    report(3, "variogram fit", &variogram_fit);
    let shared = consistency_network();
    report(4, "estimator consistency", &|| estimator_consistency(&shared));
    report(5, "head-to-head", &|| head_to_head(&shared));
    report(6, "dominance", &|| dominance(&shared));
    report(7, "coverage sweep", &coverage_sweep_shape);
    report(8, "totality and determinism", &|| totality_and_determinism(&shared));
    report(9, "wmape contract", &wmape_contract);
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
