//! Raster of kriged fraud rates over the network and a GeoJSON layer of
//! stations tagged by whether they carry a mean rate.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::Result;
use crate::fraud::FraudRateTable;
use crate::geostat::{KrigingModel, Projection};
use crate::ingest::{write_csv, IngestError, NetworkDataset};
use crate::model::{Station, StationId};

pub const FRAUDMAP_FILE: &str = "fraudmap.csv";
pub const STATIONS_GEOJSON_FILE: &str = "stations.geojson";

/// Regular lon/lat grid; cells are sampled at their centres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lon_min: f64,
    pub lon_max: f64,
    pub lat_min: f64,
    pub lat_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    /// Station bounding box grown by 10% (5% on each side), `resolution`
    /// cells per side.
    pub fn around<'a>(stations: impl IntoIterator<Item = &'a Station>, resolution: usize) -> Self {
        let (mut lon_min, mut lon_max) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut lat_min, mut lat_max) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in stations {
            lon_min = lon_min.min(s.lon);
            lon_max = lon_max.max(s.lon);
            lat_min = lat_min.min(s.lat);
            lat_max = lat_max.max(s.lat);
        }
        if lon_min > lon_max {
            (lon_min, lon_max, lat_min, lat_max) = (0.0, 0.0, 0.0, 0.0);
        }
        // a single station still gets a small square
        let pad_lon = ((lon_max - lon_min) * 0.05).max(1e-3);
        let pad_lat = ((lat_max - lat_min) * 0.05).max(1e-3);
        Self {
            lon_min: lon_min - pad_lon,
            lon_max: lon_max + pad_lon,
            lat_min: lat_min - pad_lat,
            lat_max: lat_max + pad_lat,
            nx: resolution.max(1),
            ny: resolution.max(1),
        }
    }

    pub fn cell_centre(&self, ix: usize, iy: usize) -> (f64, f64) {
        let dx = (self.lon_max - self.lon_min) / self.nx as f64;
        let dy = (self.lat_max - self.lat_min) / self.ny as f64;
        (
            self.lon_min + (ix as f64 + 0.5) * dx,
            self.lat_min + (iy as f64 + 0.5) * dy,
        )
    }
}

/// One raster cell; `x` is longitude and `y` latitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FraudMapCell {
    pub x: f64,
    pub y: f64,
    pub rate: f64,
}

/// Kriged rate at every cell centre, row by row from the south-west corner.
pub fn fraud_map(kriging: &KrigingModel, projection: &Projection, grid: &GridSpec) -> Vec<FraudMapCell> {
    let rows: Vec<usize> = (0..grid.ny).collect();
    crate::par::map(&rows, |&iy| {
        (0..grid.nx)
            .map(|ix| {
                let (lon, lat) = grid.cell_centre(ix, iy);
                let (x, y) = projection.project(lon, lat);
                FraudMapCell {
                    x: lon,
                    y: lat,
                    rate: kriging.predict(x, y).value,
                }
            })
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

pub fn write_fraud_map(path: &Path, cells: &[FraudMapCell]) -> Result<()> {
    write_csv(path, &["x", "y", "rate"], cells)?;
    Ok(())
}

/// Point features for every station. Covered stations carry their mean
/// rate over lines; every station carries its kriged rate.
pub fn stations_geojson(
    ds: &NetworkDataset,
    table: &FraudRateTable,
    kriged: &BTreeMap<StationId, f64>,
) -> Value {
    let means = table.station_means();
    let features: Vec<Value> = ds
        .stations
        .values()
        .map(|s| {
            let mean = means.get(&s.station_id);
            json!({
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [s.lon, s.lat]},
                "properties": {
                    "station_id": s.station_id,
                    "name": s.name,
                    "covered": mean.is_some(),
                    "mean_rate": mean,
                    "kriged_rate": kriged.get(&s.station_id),
                },
            })
        })
        .collect();
    json!({"type": "FeatureCollection", "features": features})
}

pub fn write_stations_geojson(path: &Path, collection: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(collection).expect("json values serialize");
    std::fs::write(path, text).map_err(|source| IngestError::Io {
        path: path.to_owned(),
        source,
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geostat::{TrainingPoint, VariogramModel};

    #[test]
    fn single_point_gives_uniform_grid() {
        let k = KrigingModel::new(
            &[TrainingPoint::new(0.0, 0.0, 0.2)],
            VariogramModel::new(0.0, 0.01, 2.0).unwrap(),
        )
        .unwrap();
        let p = Projection::new(-0.55, 47.47);
        let st = [
            Station::new("a".into(), "A", -0.6, 47.4).unwrap(),
            Station::new("b".into(), "B", -0.5, 47.5).unwrap(),
        ];
        let grid = GridSpec::around(&st, 7);
        let cells = fraud_map(&k, &p, &grid);
        assert_eq!(cells.len(), 49);
        assert!(cells.iter().all(|c| (c.rate - 0.2).abs() < 1e-12));
        assert!(grid.lon_min < -0.6 && grid.lat_max > 47.5);
        assert!((grid.lon_max - grid.lon_min - 0.11).abs() < 1e-12);
    }

    #[test]
    fn cell_on_training_point_reproduces_it() {
        let pts = [
            TrainingPoint::new(0.0, 0.0, 0.1),
            TrainingPoint::new(3.0, 0.0, 0.4),
            TrainingPoint::new(0.0, 2.0, 0.25),
        ];
        let k = KrigingModel::new(&pts, VariogramModel::new(0.0, 0.02, 1.5).unwrap()).unwrap();
        let p = Projection::new(-0.55, 47.47);
        let (lon, lat) = p.unproject(3.0, 0.0);
        let grid = GridSpec {
            lon_min: lon - 0.01,
            lon_max: lon + 0.01,
            lat_min: lat - 0.01,
            lat_max: lat + 0.01,
            nx: 1,
            ny: 1,
        };
        let cells = fraud_map(&k, &p, &grid);
        assert!((cells[0].rate - 0.4).abs() < 1e-6);
    }
}
