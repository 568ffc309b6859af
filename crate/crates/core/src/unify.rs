//! The full pipeline: O/D reconstruction, mean fraud rates on covered
//! courses, kriging for the rest of the territory, and unified occupancy
//! `Õ_i = O_i^V·(1 + R_i)` for every course without counts.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::fraud::{
    mean_fraud_rates, observe_courses, CourseObservation, FraudRateTable, RateDiagnostics,
    FRAUD_RATES_FILE,
};
use crate::geostat::{
    diameter_km, fit_spatial_model, KrigingModel, Projection, SpatialFit, TrainingPoint,
};
use crate::ingest::{write_csv, NetworkDataset};
use crate::model::{
    Course, CourseId, Direction, LineId, OccupancyProfile, ProfileSource, StationId,
};
use crate::occupancy::apc_occupancy;
use crate::od::{TicketingProfile, TripSet, TRIPS_FILE};

pub const OCCUPANCIES_FILE: &str = "occupancies.csv";
pub const VARIOGRAM_FILE: &str = "variogram.csv";
pub const TRAINING_POINTS_FILE: &str = "training_points.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateSource {
    MeanRate,
    Kriged,
}

/// Spatial context of a network: projection centroid and the distance
/// cap for variogram estimation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub projection: Projection,
    pub max_dist_km: f64,
}

impl Geometry {
    pub fn of(ds: &NetworkDataset, cfg: &Config) -> Self {
        let (lon0, lat0) = ds.centroid();
        let projection = Projection::new(lon0, lat0);
        let xy: Vec<(f64, f64)> = ds
            .stations
            .values()
            .map(|s| projection.project(s.lon, s.lat))
            .collect();
        Self {
            projection,
            max_dist_km: cfg.variogram_max_dist_fraction * diameter_km(&xy),
        }
    }
}

/// One clipped training point per station: the mean of the station's
/// table rates over lines.
pub fn training_points(
    ds: &NetworkDataset,
    table: &FraudRateTable,
    projection: &Projection,
) -> Vec<(StationId, TrainingPoint)> {
    table
        .station_means()
        .into_iter()
        .filter_map(|(sid, rate)| {
            let s = ds.stations.get(&sid)?;
            let (x, y) = projection.project(s.lon, s.lat);
            Some((sid, TrainingPoint::clipped(x, y, rate)))
        })
        .collect()
}

pub fn fit_rate_field(
    ds: &NetworkDataset,
    table: &FraudRateTable,
    geometry: &Geometry,
    cfg: &Config,
) -> Result<SpatialFit> {
    let points: Vec<TrainingPoint> = training_points(ds, table, &geometry.projection)
        .into_iter()
        .map(|(_, p)| p)
        .collect();
    if points.is_empty() {
        return Err(Error::NoCoveredCourses);
    }
    Ok(fit_spatial_model(&points, cfg.variogram_bins, geometry.max_dist_km)?)
}

/// Kriged rate at every station of the network.
pub fn kriged_station_rates(
    ds: &NetworkDataset,
    kriging: &KrigingModel,
    projection: &Projection,
) -> BTreeMap<StationId, f64> {
    crate::geostat::rates_for_uncovered_stations(kriging, projection, ds.stations.values())
}

/// Station-level fraud rate lookup: the table entry when present,
/// otherwise the kriged rate at the station.
#[derive(Debug, Clone)]
pub struct RateResolver<'a> {
    table: Option<&'a FraudRateTable>,
    kriged: BTreeMap<StationId, f64>,
}

impl<'a> RateResolver<'a> {
    pub fn new(table: &'a FraudRateTable, kriged: BTreeMap<StationId, f64>) -> Self {
        Self {
            table: Some(table),
            kriged,
        }
    }

    /// Resolver that ignores mean rates and always uses the kriged field.
    pub fn kriged_only(kriged: BTreeMap<StationId, f64>) -> Self {
        Self {
            table: None,
            kriged,
        }
    }

    pub fn resolve_rate(
        &self,
        station: &StationId,
        line: &LineId,
        direction: Direction,
    ) -> Result<(f64, RateSource)> {
        if let Some(e) = self.table.and_then(|t| t.lookup(station, line, direction)) {
            return Ok((e.rate, RateSource::MeanRate));
        }
        self.kriged
            .get(station)
            .map(|&r| (r, RateSource::Kriged))
            .ok_or_else(|| Error::UnknownStation(station.to_string()))
    }
}

/// Unified profile of a course without counts: `fraud = O^V·R`,
/// `total = O^V + fraud`.
pub fn unify_course(
    course: &Course,
    ticketing: &TicketingProfile,
    resolver: &RateResolver<'_>,
) -> Result<OccupancyProfile> {
    let n = course.n_stops();
    let mut all_table = true;
    let mut fraud = Vec::with_capacity(n);
    for (i, stop) in course.stops.iter().enumerate() {
        let t = f64::from(ticketing.occupancy[i]);
        if i + 1 == n {
            fraud.push(0.0);
            continue;
        }
        let (rate, source) =
            resolver.resolve_rate(&stop.station_id, &course.key.line_id, course.key.direction)?;
        all_table &= source == RateSource::MeanRate;
        fraud.push(t * rate);
    }
    let source = if all_table {
        ProfileSource::UnifiedMeanRate
    } else {
        ProfileSource::UnifiedKriged
    };
    OccupancyProfile::new(
        course.key.clone(),
        course.station_ids().cloned().collect(),
        ticketing.occupancy.iter().map(|&v| f64::from(v)).collect(),
        fraud,
        ticketing.alightings.iter().map(|&v| f64::from(v)).collect(),
        source,
    )
    .map_err(|source| Error::Profile {
        course: course.key.course_id.clone(),
        source,
    })
}

/// Profile of a course with counts. Ticketing is capped at the measured
/// load so that `total = ticketing + fraud` holds with `fraud >= 0`.
pub fn measured_profile(
    course: &Course,
    ticketing: &TicketingProfile,
    apc: &[u32],
) -> Result<(OccupancyProfile, usize)> {
    let mut capped = 0;
    let mut tick = Vec::with_capacity(apc.len());
    let mut fraud = Vec::with_capacity(apc.len());
    for (&o, &v) in apc.iter().zip(&ticketing.occupancy) {
        if v > o {
            capped += 1;
        }
        let t = v.min(o);
        tick.push(f64::from(t));
        fraud.push(f64::from(o - t));
    }
    let profile = OccupancyProfile::new(
        course.key.clone(),
        course.station_ids().cloned().collect(),
        tick,
        fraud,
        ticketing.alightings.iter().map(|&v| f64::from(v)).collect(),
        ProfileSource::ApcMeasured,
    )
    .map_err(|source| Error::Profile {
        course: course.key.course_id.clone(),
        source,
    })?;
    Ok((profile, capped))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PipelineDiagnostics {
    pub rates: RateDiagnostics,
    /// Stops of covered courses where ticketing exceeded the count.
    pub ticketing_capped: usize,
    pub apc_discrepancies: usize,
    pub chained_trips: usize,
    pub fallback_trips: usize,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub trips: TripSet,
    pub ticketing: BTreeMap<CourseId, TicketingProfile>,
    pub observations: Vec<CourseObservation>,
    pub table: FraudRateTable,
    pub geometry: Geometry,
    pub spatial: SpatialFit,
    pub station_points: Vec<(StationId, TrainingPoint)>,
    pub kriged_rates: BTreeMap<StationId, f64>,
    /// One profile per course, in course-id order.
    pub profiles: Vec<OccupancyProfile>,
    pub diagnostics: PipelineDiagnostics,
}

/// Runs every stage on a loaded dataset.
pub fn run_pipeline(ds: &NetworkDataset, cfg: &Config) -> Result<PipelineOutput> {
    if ds.apc_coverage.is_empty() {
        return Err(Error::NoCoveredCourses);
    }
    let trips = TripSet::reconstruct(ds, cfg.walk_radius_m, cfg.rng_seed);
    let ticketing = trips.ticketing_profiles(ds)?;
    let observations = observe_courses(ds, &ticketing, &ds.apc_coverage)?;
    let (table, rate_diag) =
        mean_fraud_rates(&observations, cfg.min_courses, cfg.direction_specific_rates)?;
    let geometry = Geometry::of(ds, cfg);
    let spatial = fit_rate_field(ds, &table, &geometry, cfg)?;
    let station_points = training_points(ds, &table, &geometry.projection);
    let kriged_rates = kriged_station_rates(ds, &spatial.kriging, &geometry.projection);
    let resolver = RateResolver::new(&table, kriged_rates.clone());

    let courses: Vec<&Course> = ds.courses.values().collect();
    let results = crate::par::map(&courses, |c| -> Result<(OccupancyProfile, usize, usize)> {
        let t = ticketing
            .get(&c.key.course_id)
            .ok_or_else(|| Error::MissingTicketing(c.key.course_id.clone()))?;
        if ds.is_covered(&c.key.course_id) {
            let apc = apc_occupancy(&c.stops)?;
            let (p, capped) = measured_profile(c, t, &apc.occupancy)?;
            Ok((p, capped, apc.discrepancies.len()))
        } else {
            Ok((unify_course(c, t, &resolver)?, 0, 0))
        }
    });
    let mut profiles = Vec::with_capacity(results.len());
    let mut diagnostics = PipelineDiagnostics {
        rates: rate_diag,
        chained_trips: trips.trips.iter().filter(|t| t.method.is_chained()).count(),
        ..Default::default()
    };
    diagnostics.fallback_trips = trips.trips.len() - diagnostics.chained_trips;
    for r in results {
        let (p, capped, disc) = r?;
        diagnostics.ticketing_capped += capped;
        diagnostics.apc_discrepancies += disc;
        profiles.push(p);
    }
    Ok(PipelineOutput {
        trips,
        ticketing,
        observations,
        table,
        geometry,
        spatial,
        station_points,
        kriged_rates,
        profiles,
        diagnostics,
    })
}

#[derive(Serialize)]
struct OccupancyRow<'a> {
    course_id: &'a CourseId,
    seq: usize,
    station_id: &'a StationId,
    ticketing: f64,
    fraud: f64,
    total: f64,
    source: ProfileSource,
}

pub fn write_occupancies(path: &Path, profiles: &[OccupancyProfile]) -> Result<()> {
    let rows: Vec<OccupancyRow<'_>> = profiles
        .iter()
        .flat_map(|p| {
            (0..p.len()).map(move |i| OccupancyRow {
                course_id: p.course_id(),
                seq: i + 1,
                station_id: &p.stations[i],
                ticketing: p.ticketing[i],
                fraud: p.fraud[i],
                total: p.total[i],
                source: p.source,
            })
        })
        .collect();
    write_csv(
        path,
        &["course_id", "seq", "station_id", "ticketing", "fraud", "total", "source"],
        &rows,
    )?;
    Ok(())
}

#[derive(Serialize)]
struct VariogramRow {
    nugget: f64,
    sill: f64,
    range_km: f64,
}

#[derive(Serialize)]
struct TrainingPointRow<'a> {
    station_id: &'a StationId,
    x_km: f64,
    y_km: f64,
    value: f64,
}

impl PipelineOutput {
    pub fn write_trips(&self, dir: &Path) -> Result<()> {
        self.trips.write_csv(&dir.join(TRIPS_FILE))?;
        Ok(())
    }

    pub fn write_rates(&self, dir: &Path) -> Result<()> {
        self.table.write_csv(&dir.join(FRAUD_RATES_FILE))?;
        Ok(())
    }

    /// `variogram.csv` and `training_points.csv`.
    pub fn write_spatial_model(&self, dir: &Path) -> Result<()> {
        let v = self.spatial.kriging.variogram();
        write_csv(
            &dir.join(VARIOGRAM_FILE),
            &["nugget", "sill", "range_km"],
            &[VariogramRow {
                nugget: v.nugget,
                sill: v.sill,
                range_km: v.range_km,
            }],
        )?;
        let rows: Vec<TrainingPointRow<'_>> = self
            .station_points
            .iter()
            .map(|(sid, p)| TrainingPointRow {
                station_id: sid,
                x_km: p.x,
                y_km: p.y,
                value: p.value,
            })
            .collect();
        write_csv(
            &dir.join(TRAINING_POINTS_FILE),
            &["station_id", "x_km", "y_km", "value"],
            &rows,
        )?;
        Ok(())
    }

    pub fn write_occupancies(&self, dir: &Path) -> Result<()> {
        write_occupancies(&dir.join(OCCUPANCIES_FILE), &self.profiles)
    }

    /// Every pipeline artifact.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|source| {
            Error::Ingest(crate::ingest::IngestError::Io {
                path: dir.to_owned(),
                source,
            })
        })?;
        self.write_trips(dir)?;
        self.write_rates(dir)?;
        self.write_spatial_model(dir)?;
        self.write_occupancies(dir)
    }
}
