//! Per-course fraud ratios and mean fraud rate per (station, line) over
//! courses with counting-cell data.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ingest::{write_csv, IngestError, NetworkDataset};
use crate::model::{CourseId, Direction, LineId, StationId};
use crate::occupancy::{apc_occupancy, FlowError};
use crate::od::TicketingProfile;

pub const FRAUD_RATES_FILE: &str = "fraud_rates.csv";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FraudError {
    #[error("no course carries counting-cell data")]
    NoCoveredCourses,
    #[error("course {course}: {source}")]
    Apc { course: CourseId, source: FlowError },
    #[error("course {0} has no ticketing profile")]
    MissingTicketing(CourseId),
    #[error("course {course}: occupancy vectors differ in length")]
    LengthMismatch { course: CourseId },
}

/// `(O_i − O_i^V) / O_i^V` per stop; `None` where `O_i^V = 0` and at the
/// terminus.
#[derive(Debug, Clone, PartialEq)]
pub struct CourseRatios {
    pub ratios: Vec<Option<f64>>,
    /// Non-terminal stops skipped for a zero ticketing occupancy.
    pub skipped_zero: usize,
}

pub fn course_fraud_ratios(apc: &[u32], ticketing: &[u32]) -> CourseRatios {
    let n = apc.len().min(ticketing.len());
    let mut skipped_zero = 0;
    let ratios = (0..n)
        .map(|i| {
            if i + 1 == n {
                None
            } else if ticketing[i] == 0 {
                skipped_zero += 1;
                None
            } else {
                let v = f64::from(ticketing[i]);
                Some((f64::from(apc[i]) - v) / v)
            }
        })
        .collect();
    CourseRatios {
        ratios,
        skipped_zero,
    }
}

/// Fraud ratios of one APC-covered course, with what is needed to key them.
#[derive(Debug, Clone, PartialEq)]
pub struct CourseObservation {
    pub course_id: CourseId,
    pub line_id: LineId,
    pub direction: Direction,
    pub stations: Vec<StationId>,
    pub apc_occupancy: Vec<u32>,
    pub ratios: CourseRatios,
}

/// Builds observations for the listed covered courses.
pub fn observe_courses<'a>(
    ds: &NetworkDataset,
    ticketing: &BTreeMap<CourseId, TicketingProfile>,
    courses: impl IntoIterator<Item = &'a CourseId>,
) -> Result<Vec<CourseObservation>, FraudError> {
    courses
        .into_iter()
        .filter_map(|id| ds.courses.get(id))
        .map(|c| {
            let id = &c.key.course_id;
            let apc = apc_occupancy(&c.stops).map_err(|source| FraudError::Apc {
                course: id.clone(),
                source,
            })?;
            let t = ticketing
                .get(id)
                .ok_or_else(|| FraudError::MissingTicketing(id.clone()))?;
            if t.occupancy.len() != apc.occupancy.len() {
                return Err(FraudError::LengthMismatch { course: id.clone() });
            }
            Ok(CourseObservation {
                course_id: id.clone(),
                line_id: c.key.line_id.clone(),
                direction: c.key.direction,
                stations: c.station_ids().cloned().collect(),
                ratios: course_fraud_ratios(&apc.occupancy, &t.occupancy),
                apc_occupancy: apc.occupancy,
            })
        })
        .collect()
}

/// Key of a fraud-rate entry. `direction` is `None` unless rates are kept
/// per direction.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RateKey {
    pub station_id: StationId,
    pub line_id: LineId,
    pub direction: Option<Direction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEntry {
    pub rate: f64,
    pub n_courses: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RateDiagnostics {
    pub skipped_zero: usize,
    pub floored: usize,
    /// Keys dropped for having fewer than `min_courses` contributions.
    pub below_min_courses: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FraudRateTable {
    pub entries: BTreeMap<RateKey, RateEntry>,
    pub direction_specific: bool,
}

#[derive(Debug, Clone, Copy, Default)]
struct RunningMean {
    mean: f64,
    n: usize,
}

impl RunningMean {
    // incremental form keeps the mean of identical values exact
    fn push(&mut self, x: f64) {
        self.n += 1;
        self.mean += (x - self.mean) / self.n as f64;
    }
}

#[derive(Debug, Clone, Serialize)]
struct RateRow<'a> {
    station_id: &'a StationId,
    line_id: &'a LineId,
    rate: f64,
    n_courses: usize,
    direction: Option<Direction>,
}

impl FraudRateTable {
    pub fn key(&self, station: &StationId, line: &LineId, direction: Direction) -> RateKey {
        RateKey {
            station_id: station.clone(),
            line_id: line.clone(),
            direction: self.direction_specific.then_some(direction),
        }
    }

    pub fn lookup(&self, station: &StationId, line: &LineId, direction: Direction) -> Option<&RateEntry> {
        self.entries.get(&self.key(station, line, direction))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One rate per station: the mean over all entries at that station.
    pub fn station_means(&self) -> BTreeMap<StationId, f64> {
        let mut acc: BTreeMap<StationId, RunningMean> = BTreeMap::new();
        for (k, e) in &self.entries {
            acc.entry(k.station_id.clone()).or_default().push(e.rate);
        }
        acc.into_iter().map(|(s, m)| (s, m.mean)).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), IngestError> {
        let rows: Vec<RateRow<'_>> = self
            .entries
            .iter()
            .map(|(k, e)| RateRow {
                station_id: &k.station_id,
                line_id: &k.line_id,
                rate: e.rate,
                n_courses: e.n_courses,
                direction: k.direction,
            })
            .collect();
        write_csv(
            path,
            &["station_id", "line_id", "rate", "n_courses", "direction"],
            &rows,
        )
    }
}

/// Mean of per-course ratios for each (station, line), over courses that
/// yield a ratio there. Means below zero are floored to 0 after averaging.
pub fn mean_fraud_rates<'a>(
    observations: impl IntoIterator<Item = &'a CourseObservation>,
    min_courses: usize,
    direction_specific: bool,
) -> Result<(FraudRateTable, RateDiagnostics), FraudError> {
    let mut acc: BTreeMap<RateKey, RunningMean> = BTreeMap::new();
    let mut diag = RateDiagnostics::default();
    let mut any = false;
    for obs in observations {
        any = true;
        diag.skipped_zero += obs.ratios.skipped_zero;
        for (station, ratio) in obs.stations.iter().zip(&obs.ratios.ratios) {
            if let Some(r) = ratio {
                let key = RateKey {
                    station_id: station.clone(),
                    line_id: obs.line_id.clone(),
                    direction: direction_specific.then_some(obs.direction),
                };
                acc.entry(key).or_default().push(*r);
            }
        }
    }
    if !any {
        return Err(FraudError::NoCoveredCourses);
    }
    let min_courses = min_courses.max(1);
    let mut entries = BTreeMap::new();
    for (key, m) in acc {
        if m.n < min_courses {
            diag.below_min_courses += 1;
            continue;
        }
        let rate = if m.mean < 0.0 {
            diag.floored += 1;
            0.0
        } else {
            m.mean
        };
        entries.insert(
            key,
            RateEntry {
                rate,
                n_courses: m.n,
            },
        );
    }
    Ok((
        FraudRateTable {
            entries,
            direction_specific,
        },
        diag,
    ))
}
