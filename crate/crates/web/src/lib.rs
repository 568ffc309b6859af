//! Browser demo: generates a small synthetic network, runs the full
//! pipeline in the page and exposes the fraud heat map, the fitted
//! variogram and per-course load profiles as JSON.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use occupancy_core::fraudmap::{fraud_map, GridSpec};
use occupancy_core::synth::{generate, SynthNetwork, Scenario};
use occupancy_core::unify::{run_pipeline, PipelineOutput};
use occupancy_core::{Config, NetworkDataset};

/// Pipeline state for one generated network.
pub struct Session {
    net: SynthNetwork,
    ds: NetworkDataset,
    out: PipelineOutput,
}

impl Session {
    pub fn new(n_lines: usize, courses_per_day: usize, coverage: f64, seed: u64) -> Result<Self, String> {
        let scenario = Scenario {
            n_lines,
            courses_per_line_per_day: courses_per_day,
            n_days: 3,
            coverage,
            seed,
            ..Scenario::default()
        };
        let net = generate(&scenario).map_err(|e| e.to_string())?;
        let cfg = Config {
            rng_seed: seed,
            ..Config::default()
        };
        let (ds, _) = NetworkDataset::build(net.raw.clone(), &cfg).map_err(|e| e.to_string())?;
        let out = run_pipeline(&ds, &cfg).map_err(|e| e.to_string())?;
        Ok(Self { net, ds, out })
    }

    pub fn n_courses(&self) -> usize {
        self.out.profiles.len()
    }

    /// Stations with their true, measured and kriged rates.
    pub fn stations(&self) -> Value {
        let means = self.out.table.station_means();
        let stations: Vec<Value> = self
            .ds
            .stations
            .values()
            .map(|s| {
                let truth = self.net.truth.stations.get(&s.station_id);
                json!({
                    "id": s.station_id,
                    "lon": s.lon,
                    "lat": s.lat,
                    "true_p": truth.map(|t| t.p),
                    "measured": means.get(&s.station_id),
                    "kriged": self.out.kriged_rates.get(&s.station_id),
                })
            })
            .collect();
        json!(stations)
    }

    /// Kriged rates on a `resolution` square grid, row by row from the
    /// south-west corner.
    pub fn heatmap(&self, resolution: usize) -> Value {
        let grid = GridSpec::around(self.ds.stations.values(), resolution.clamp(1, 400));
        let cells = fraud_map(&self.out.spatial.kriging, &self.out.geometry.projection, &grid);
        json!({
            "lon_min": grid.lon_min,
            "lon_max": grid.lon_max,
            "lat_min": grid.lat_min,
            "lat_max": grid.lat_max,
            "nx": grid.nx,
            "ny": grid.ny,
            "rates": cells.iter().map(|c| c.rate).collect::<Vec<_>>(),
            "stations": self.stations(),
        })
    }

    /// Empirical bins and the fitted model sampled on `samples` points.
    pub fn variogram(&self, samples: usize) -> Value {
        let v = *self.out.spatial.kriging.variogram();
        let max = self.out.spatial.max_dist_km;
        let n = samples.max(2);
        let curve: Vec<[f64; 2]> = (0..n)
            .map(|i| {
                let h = max * i as f64 / (n - 1) as f64;
                [h, if h == 0.0 { 0.0 } else { v.semivariance(h) }]
            })
            .collect();
        json!({
            "origin": format!("{:?}", self.out.spatial.origin),
            "nugget": v.nugget,
            "sill": v.sill,
            "range_km": v.range_km,
            "bins": self.out.spatial.bins.iter().map(|b| json!({"h": b.h_mid, "gamma": b.gamma, "pairs": b.pairs})).collect::<Vec<_>>(),
            "curve": curve,
        })
    }

    /// Reconstructed and true load of one course, by stop.
    pub fn course_profile(&self, index: usize) -> Option<Value> {
        let p = self.out.profiles.get(index)?;
        let truth = self.net.truth.courses.get(&p.course.course_id);
        Some(json!({
            "course_id": p.course.course_id,
            "line_id": p.course.line_id,
            "direction": p.course.direction.as_str(),
            "start_time": p.course.start_time,
            "source": p.source.as_str(),
            "stations": p.stations,
            "ticketing": p.ticketing,
            "fraud": p.fraud,
            "total": p.total,
            "truth": truth.map(|t| t.occupancy.clone()),
        }))
    }
}

#[wasm_bindgen]
pub struct Demo {
    inner: Session,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(n_lines: usize, courses_per_day: usize, coverage: f64, seed: u64) -> Result<Demo, JsError> {
        Session::new(n_lines, courses_per_day, coverage, seed)
            .map(|inner| Demo { inner })
            .map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen(js_name = nCourses)]
    pub fn n_courses(&self) -> usize {
        self.inner.n_courses()
    }

    pub fn heatmap(&self, resolution: usize) -> String {
        self.inner.heatmap(resolution).to_string()
    }

    pub fn variogram(&self, samples: usize) -> String {
        self.inner.variogram(samples).to_string()
    }

    #[wasm_bindgen(js_name = courseProfile)]
    pub fn course_profile(&self, index: usize) -> Option<String> {
        self.inner.course_profile(index).map(|v| v.to_string())
    }
}
