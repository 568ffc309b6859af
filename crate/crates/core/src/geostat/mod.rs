//! Spatial model of fraud rates: local projection, semivariogram fitting
//! and ordinary kriging.

pub mod kriging;
pub mod linalg;
pub mod variogram;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{Station, StationId};

pub use kriging::{KrigingModel, KrigingPrediction};
pub use variogram::{empirical_variogram, fit_exponential, VariogramBin, VariogramFit, VariogramModel};

const EARTH_RADIUS_M: f64 = 6_371_008.8;
const KM_PER_DEG_LON_EQUATOR: f64 = 111.32;
const KM_PER_DEG_LAT: f64 = 110.57;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeostatError {
    #[error("need at least two points, got {0}")]
    TooFewPoints(usize),
    #[error("need at least three populated variogram bins, got {0}")]
    TooFewBins(usize),
    #[error("invalid binning: {n_bins} bins up to {max_dist_km} km")]
    InvalidBinning { n_bins: usize, max_dist_km: f64 },
    #[error("invalid variogram (nugget {nugget}, sill {sill}, range {range_km} km)")]
    InvalidModel {
        nugget: f64,
        sill: f64,
        range_km: f64,
    },
    #[error("kriging system is singular: {0}")]
    SingularSystem(String),
}

/// Great-circle distance in metres.
pub fn haversine_m(lon1: f64, lat1: f64, lon2: f64, lat2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * a.sqrt().asin()
}

/// Local equirectangular projection around a network centroid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub lon0: f64,
    pub lat0: f64,
}

impl Projection {
    pub fn new(lon0: f64, lat0: f64) -> Self {
        Self { lon0, lat0 }
    }

    /// `(x, y)` in km east and north of the centroid.
    pub fn project(&self, lon: f64, lat: f64) -> (f64, f64) {
        (
            (lon - self.lon0) * self.lat0.to_radians().cos() * KM_PER_DEG_LON_EQUATOR,
            (lat - self.lat0) * KM_PER_DEG_LAT,
        )
    }

    pub fn unproject(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.lon0 + x / (self.lat0.to_radians().cos() * KM_PER_DEG_LON_EQUATOR),
            self.lat0 + y / KM_PER_DEG_LAT,
        )
    }
}

/// Free-function form of [`Projection::project`].
pub fn project(lon: f64, lat: f64, centroid: (f64, f64)) -> (f64, f64) {
    Projection::new(centroid.0, centroid.1).project(lon, lat)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingPoint {
    pub x: f64,
    pub y: f64,
    pub value: f64,
}

impl TrainingPoint {
    pub fn new(x: f64, y: f64, value: f64) -> Self {
        Self { x, y, value }
    }

    /// Training value from a raw fraud rate: negative rates become 0 and
    /// rates above 1 (evaders outnumbering validated riders) are clipped.
    pub fn clipped(x: f64, y: f64, raw_rate: f64) -> Self {
        Self::new(x, y, raw_rate.clamp(0.0, 1.0))
    }

    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        (self.x - x).hypot(self.y - y)
    }
}

/// Largest pairwise distance between projected locations, km.
pub fn diameter_km(xy: &[(f64, f64)]) -> f64 {
    let mut d = 0.0f64;
    for (i, a) in xy.iter().enumerate() {
        for b in &xy[i + 1..] {
            d = d.max((a.0 - b.0).hypot(a.1 - b.1));
        }
    }
    d
}

/// How the variogram behind a kriging model was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariogramOrigin {
    Fitted,
    /// All empirical bins were zero.
    Degenerate,
    /// Too few points or bins to estimate a variogram; pure nugget.
    Insufficient,
}

#[derive(Debug, Clone)]
pub struct SpatialFit {
    pub kriging: KrigingModel,
    pub bins: Vec<VariogramBin>,
    pub origin: VariogramOrigin,
    pub max_dist_km: f64,
}

/// Fits the exponential variogram on `points` and builds the kriging
/// model. When the data cannot support a variogram, a pure-nugget model
/// (equal weights, i.e. the training mean) is used and flagged.
pub fn fit_spatial_model(
    points: &[TrainingPoint],
    n_bins: usize,
    max_dist_km: f64,
) -> Result<SpatialFit, GeostatError> {
    let max_dist_km = if max_dist_km > 0.0 { max_dist_km } else { 1.0 };
    let bins = if points.len() >= 2 {
        empirical_variogram(points, n_bins, max_dist_km)?
    } else {
        Vec::new()
    };
    let (variogram, origin) = match fit_exponential(&bins, max_dist_km) {
        Ok(fit) if fit.degenerate => (fit.model, VariogramOrigin::Degenerate),
        Ok(fit) => (fit.model, VariogramOrigin::Fitted),
        Err(GeostatError::TooFewBins(_)) => {
            (VariogramModel::new(0.0, 0.0, max_dist_km)?, VariogramOrigin::Insufficient)
        }
        Err(e) => return Err(e),
    };
    Ok(SpatialFit {
        kriging: KrigingModel::new(points, variogram)?,
        bins,
        origin,
        max_dist_km,
    })
}

/// Kriged rate for every listed station, each in `[0, 1]`.
pub fn rates_for_uncovered_stations<'a>(
    model: &KrigingModel,
    projection: &Projection,
    stations: impl IntoIterator<Item = &'a Station>,
) -> BTreeMap<StationId, f64> {
    stations
        .into_iter()
        .map(|s| {
            let (x, y) = projection.project(s.lon, s.lat);
            (s.station_id.clone(), model.predict(x, y).value)
        })
        .collect()
}
