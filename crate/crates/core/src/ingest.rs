//! Loading and cross-referencing of stations, routes, courses, fare
//! validations and counting-cell measures.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::model::{
    ApcMeasure, CardId, Course, CourseId, CourseKey, Direction, LineId, Station, StationId,
    StopEvent,
};
use crate::occupancy::apc_occupancy;

pub const STATIONS_FILE: &str = "stations.csv";
pub const ROUTES_FILE: &str = "routes.csv";
pub const COURSES_FILE: &str = "courses.csv";
pub const AFC_FILE: &str = "afc.csv";
pub const APC_FILE: &str = "apc.csv";
pub const STOP_EVENTS_FILE: &str = "stop_events.csv";
pub const REJECTS_FILE: &str = "rejects.csv";

const STATIONS_HEADER: &[&str] = &["station_id", "name", "lon", "lat"];
const ROUTES_HEADER: &[&str] = &["line_id", "direction", "seq", "station_id"];
const COURSES_HEADER: &[&str] = &["course_id", "line_id", "direction", "service_date", "start_time"];
const AFC_HEADER: &[&str] = &["card_id", "timestamp", "course_id", "station_id"];
const APC_HEADER: &[&str] = &["course_id", "seq", "boardings", "alightings", "occupancy_after"];

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{file}: {message}")]
    Schema { file: String, message: String },
    #[error("{file}: {source}")]
    Csv { file: String, source: csv::Error },
    #[error("dataset contains no usable course")]
    EmptyDataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectKind {
    /// Column missing or value mistyped.
    Schema,
    /// Unknown station, line, route or course.
    Referential,
    /// Row is well-formed but contradicts other data.
    Consistency,
}

/// One discarded input row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub file: String,
    /// 1-based line number in the source file, header included.
    pub line: u64,
    pub kind: RejectKind,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationRow {
    pub station_id: StationId,
    pub name: String,
    pub lon: f64,
    pub lat: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteRow {
    pub line_id: LineId,
    pub direction: Direction,
    pub seq: u32,
    pub station_id: StationId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CourseRow {
    pub course_id: CourseId,
    pub line_id: LineId,
    pub direction: Direction,
    pub service_date: NaiveDate,
    pub start_time: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AfcRow {
    pub card_id: Option<CardId>,
    /// Seconds since midnight of the course's service day.
    pub timestamp: i64,
    pub course_id: CourseId,
    pub station_id: StationId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApcRow {
    pub course_id: CourseId,
    pub seq: u32,
    pub boardings: Option<u32>,
    pub alightings: Option<u32>,
    pub occupancy_after: Option<u32>,
}

/// Rows of the five input files, before cross-referencing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawTables {
    pub stations: Vec<(u64, StationRow)>,
    pub routes: Vec<(u64, RouteRow)>,
    pub courses: Vec<(u64, CourseRow)>,
    pub afc: Vec<(u64, AfcRow)>,
    pub apc: Vec<(u64, ApcRow)>,
}

/// Locations of the input files.
#[derive(Debug, Clone)]
pub struct NetworkPaths {
    pub stations: PathBuf,
    pub routes: PathBuf,
    pub courses: PathBuf,
    pub afc: PathBuf,
    pub apc: PathBuf,
}

impl NetworkPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            stations: dir.join(STATIONS_FILE),
            routes: dir.join(ROUTES_FILE),
            courses: dir.join(COURSES_FILE),
            afc: dir.join(AFC_FILE),
            apc: dir.join(APC_FILE),
        }
    }
}

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Io {
        path: path.to_owned(),
        source,
    })
}

fn file_label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Reads one CSV table. A missing column aborts; an undecodable row is
/// rejected and reading continues.
fn read_table<T: DeserializeOwned, R: Read>(
    reader: R,
    file: &str,
    required: &[&str],
    rejects: &mut Vec<Reject>,
) -> Result<Vec<(u64, T)>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|source| IngestError::Csv {
            file: file.to_owned(),
            source,
        })?
        .clone();
    for col in required {
        if !headers.iter().any(|h| h == *col) {
            return Err(IngestError::Schema {
                file: file.to_owned(),
                message: format!("missing column `{col}`"),
            });
        }
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                rejects.push(Reject {
                    file: file.to_owned(),
                    line: e.position().map_or(0, |p| p.line()),
                    kind: RejectKind::Schema,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let line = record.position().map_or(0, |p| p.line());
        match record.deserialize::<T>(Some(&headers)) {
            Ok(row) => rows.push((line, row)),
            Err(e) => rejects.push(Reject {
                file: file.to_owned(),
                line,
                kind: RejectKind::Schema,
                reason: e.to_string(),
            }),
        }
    }
    Ok(rows)
}

impl RawTables {
    pub fn read(paths: &NetworkPaths) -> Result<(Self, Vec<Reject>), IngestError> {
        let mut rejects = Vec::new();
        let stations = read_table(
            open(&paths.stations)?,
            &file_label(&paths.stations),
            STATIONS_HEADER,
            &mut rejects,
        )?;
        let routes = read_table(
            open(&paths.routes)?,
            &file_label(&paths.routes),
            ROUTES_HEADER,
            &mut rejects,
        )?;
        let courses = read_table(
            open(&paths.courses)?,
            &file_label(&paths.courses),
            COURSES_HEADER,
            &mut rejects,
        )?;
        let afc = read_table(
            open(&paths.afc)?,
            &file_label(&paths.afc),
            AFC_HEADER,
            &mut rejects,
        )?;
        let apc = read_table(
            open(&paths.apc)?,
            &file_label(&paths.apc),
            APC_HEADER,
            &mut rejects,
        )?;
        Ok((
            Self {
                stations,
                routes,
                courses,
                afc,
                apc,
            },
            rejects,
        ))
    }

    /// Writes the tables in input schema, in stored row order.
    pub fn write_dir(&self, dir: &Path) -> Result<(), IngestError> {
        std::fs::create_dir_all(dir).map_err(|source| IngestError::Io {
            path: dir.to_owned(),
            source,
        })?;
        write_csv(&dir.join(STATIONS_FILE), STATIONS_HEADER, self.stations.iter().map(|(_, r)| r))?;
        write_csv(&dir.join(ROUTES_FILE), ROUTES_HEADER, self.routes.iter().map(|(_, r)| r))?;
        write_csv(&dir.join(COURSES_FILE), COURSES_HEADER, self.courses.iter().map(|(_, r)| r))?;
        write_csv(&dir.join(AFC_FILE), AFC_HEADER, self.afc.iter().map(|(_, r)| r))?;
        write_csv(&dir.join(APC_FILE), APC_HEADER, self.apc.iter().map(|(_, r)| r))?;
        Ok(())
    }

    /// Attaches synthetic line numbers (header is line 1).
    pub fn numbered<T>(rows: Vec<T>) -> Vec<(u64, T)> {
        rows.into_iter().zip(2u64..).map(|(r, l)| (l, r)).collect()
    }
}

/// Serializes rows to a CSV file. The header is written explicitly so
/// that empty tables still carry their columns.
pub(crate) fn write_csv<'a, T: Serialize + 'a>(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = &'a T>,
) -> Result<(), IngestError> {
    let file = File::create(path).map_err(|source| IngestError::Io {
        path: path.to_owned(),
        source,
    })?;
    write_csv_to(std::io::BufWriter::new(file), &file_label(path), header, rows)
}

pub(crate) fn write_csv_to<'a, T: Serialize + 'a, W: Write>(
    writer: W,
    label: &str,
    header: &[&str],
    rows: impl IntoIterator<Item = &'a T>,
) -> Result<(), IngestError> {
    let csv_err = |source| IngestError::Csv {
        file: label.to_owned(),
        source,
    };
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    wtr.write_record(header).map_err(csv_err)?;
    for row in rows {
        wtr.serialize(row).map_err(csv_err)?;
    }
    wtr.flush().map_err(|source| IngestError::Io {
        path: PathBuf::from(label),
        source,
    })
}

/// A boarding validation assigned to a course.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub card_id: Option<CardId>,
    pub timestamp: i64,
    pub course_id: CourseId,
    pub station_id: StationId,
    pub line_id: LineId,
    pub direction: Direction,
    pub service_date: NaiveDate,
    pub boarding_seq: u32,
}

/// Fully cross-referenced network data.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkDataset {
    pub stations: BTreeMap<StationId, Station>,
    pub routes: BTreeMap<(LineId, Direction), Vec<StationId>>,
    pub courses: BTreeMap<CourseId, Course>,
    pub validations: Vec<ValidationRecord>,
    pub apc_coverage: BTreeSet<CourseId>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadReport {
    pub rejects: Vec<Reject>,
}

impl LoadReport {
    pub fn count(&self, kind: RejectKind) -> usize {
        self.rejects.iter().filter(|r| r.kind == kind).count()
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), IngestError> {
        write_csv(path, &["file", "line", "kind", "reason"], &self.rejects)
    }
}

/// Reads and cross-references the five input files.
pub fn load_network(
    paths: &NetworkPaths,
    cfg: &Config,
) -> Result<(NetworkDataset, LoadReport), IngestError> {
    let (raw, mut rejects) = RawTables::read(paths)?;
    let (dataset, mut report) = NetworkDataset::build(raw, cfg)?;
    rejects.append(&mut report.rejects);
    let report = LoadReport { rejects };
    if let Some(path) = &cfg.reject_log_path {
        report.write_csv(path)?;
    }
    Ok((dataset, report))
}

struct Rejects<'a>(&'a mut Vec<Reject>);

impl Rejects<'_> {
    fn push(&mut self, file: &str, line: u64, kind: RejectKind, reason: impl Into<String>) {
        self.0.push(Reject {
            file: file.to_owned(),
            line,
            kind,
            reason: reason.into(),
        });
    }
}

impl NetworkDataset {
    /// Cross-references raw tables. Offending rows are rejected with a
    /// reason; the rest of the data is kept.
    pub fn build(raw: RawTables, cfg: &Config) -> Result<(Self, LoadReport), IngestError> {
        let mut rejected = Vec::new();
        let mut rej = Rejects(&mut rejected);

        let mut stations = BTreeMap::new();
        for (line, row) in raw.stations {
            if stations.contains_key(&row.station_id) {
                rej.push(
                    STATIONS_FILE,
                    line,
                    RejectKind::Consistency,
                    format!("duplicate station_id {}", row.station_id),
                );
                continue;
            }
            match Station::new(row.station_id.clone(), row.name, row.lon, row.lat) {
                Ok(s) => {
                    stations.insert(row.station_id, s);
                }
                Err(e) => rej.push(STATIONS_FILE, line, RejectKind::Schema, e.to_string()),
            }
        }

        let mut route_rows: BTreeMap<(LineId, Direction), Vec<(u64, RouteRow)>> = BTreeMap::new();
        for (line, row) in raw.routes {
            if !stations.contains_key(&row.station_id) {
                rej.push(
                    ROUTES_FILE,
                    line,
                    RejectKind::Referential,
                    format!("unknown station {}", row.station_id),
                );
                continue;
            }
            route_rows
                .entry((row.line_id.clone(), row.direction))
                .or_default()
                .push((line, row));
        }
        let mut routes: BTreeMap<(LineId, Direction), Vec<StationId>> = BTreeMap::new();
        for (key, mut rows) in route_rows {
            rows.sort_by_key(|(_, r)| r.seq);
            let contiguous = rows.iter().zip(1u32..).all(|((_, r), s)| r.seq == s);
            let distinct: BTreeSet<_> = rows.iter().map(|(_, r)| &r.station_id).collect();
            if rows.len() < 2 || !contiguous || distinct.len() != rows.len() {
                for (line, _) in &rows {
                    rej.push(
                        ROUTES_FILE,
                        *line,
                        RejectKind::Consistency,
                        format!(
                            "route {} {} must list >= 2 distinct stations with seq 1..N",
                            key.0, key.1
                        ),
                    );
                }
                continue;
            }
            routes.insert(key, rows.into_iter().map(|(_, r)| r.station_id).collect());
        }

        let mut courses = BTreeMap::new();
        for (line, row) in raw.courses {
            let key = (row.line_id.clone(), row.direction);
            let Some(route) = routes.get(&key) else {
                rej.push(
                    COURSES_FILE,
                    line,
                    RejectKind::Referential,
                    format!("no route for line {} {}", row.line_id, row.direction),
                );
                continue;
            };
            if courses.contains_key(&row.course_id) {
                rej.push(
                    COURSES_FILE,
                    line,
                    RejectKind::Consistency,
                    format!("duplicate course_id {}", row.course_id),
                );
                continue;
            }
            let stops = route
                .iter()
                .zip(1u32..)
                .map(|(sid, seq)| StopEvent {
                    station_id: sid.clone(),
                    seq,
                    boardings_afc: 0,
                    apc: None,
                })
                .collect();
            let key = CourseKey {
                course_id: row.course_id.clone(),
                line_id: row.line_id,
                direction: row.direction,
                service_date: row.service_date,
                start_time: row.start_time,
            };
            courses.insert(row.course_id, Course { key, stops });
        }

        for (line, row) in raw.apc {
            let Some(course) = courses.get_mut(&row.course_id) else {
                rej.push(
                    APC_FILE,
                    line,
                    RejectKind::Referential,
                    format!("unknown course {}", row.course_id),
                );
                continue;
            };
            let n = course.stops.len() as u32;
            if row.seq == 0 || row.seq > n {
                rej.push(
                    APC_FILE,
                    line,
                    RejectKind::Referential,
                    format!("seq {} outside 1..={n} on course {}", row.seq, row.course_id),
                );
                continue;
            }
            let measure = ApcMeasure {
                boardings: row.boardings,
                alightings: row.alightings,
                occupancy_after: row.occupancy_after,
            };
            if !measure.is_usable() {
                rej.push(
                    APC_FILE,
                    line,
                    RejectKind::Schema,
                    "needs occupancy_after or both boardings and alightings",
                );
                continue;
            }
            let stop = &mut course.stops[row.seq as usize - 1];
            if stop.apc.is_some() {
                rej.push(
                    APC_FILE,
                    line,
                    RejectKind::Consistency,
                    format!("duplicate measure for seq {}", row.seq),
                );
                continue;
            }
            stop.apc = Some(measure);
        }

        let mut apc_coverage = BTreeSet::new();
        for course in courses.values_mut() {
            if !course.has_full_apc() {
                continue;
            }
            let consistent = match apc_occupancy(&course.stops) {
                Ok(o) if o.occupancy.last() == Some(&0) => Ok(()),
                Ok(_) => Err("vehicle not empty after the last stop".to_owned()),
                Err(e) => Err(e.to_string()),
            };
            match consistent {
                Ok(()) => {
                    apc_coverage.insert(course.key.course_id.clone());
                }
                Err(reason) => rej.push(
                    APC_FILE,
                    0,
                    RejectKind::Consistency,
                    format!("course {} left uncovered: {reason}", course.key.course_id),
                ),
            }
        }

        let lo_pad = i64::from(cfg.schedule_match_window_s);
        let hi_pad = i64::from(cfg.max_course_duration_s) + lo_pad;
        let mut validations = Vec::new();
        for (line, row) in raw.afc {
            let Some(course) = courses.get_mut(&row.course_id) else {
                rej.push(
                    AFC_FILE,
                    line,
                    RejectKind::Referential,
                    format!("unknown course {}", row.course_id),
                );
                continue;
            };
            if !stations.contains_key(&row.station_id) {
                rej.push(
                    AFC_FILE,
                    line,
                    RejectKind::Referential,
                    format!("unknown station {}", row.station_id),
                );
                continue;
            }
            let Some(seq) = course.seq_of(&row.station_id) else {
                rej.push(
                    AFC_FILE,
                    line,
                    RejectKind::Referential,
                    format!("station {} not on course {}", row.station_id, row.course_id),
                );
                continue;
            };
            if seq as usize == course.stops.len() {
                rej.push(
                    AFC_FILE,
                    line,
                    RejectKind::Consistency,
                    format!("boarding at terminus {} of course {}", row.station_id, row.course_id),
                );
                continue;
            }
            let start = i64::from(course.key.start_time);
            if row.timestamp < start - lo_pad || row.timestamp > start + hi_pad {
                rej.push(
                    AFC_FILE,
                    line,
                    RejectKind::Consistency,
                    format!(
                        "timestamp {} outside the service window of course {}",
                        row.timestamp, row.course_id
                    ),
                );
                continue;
            }
            course.stops[seq as usize - 1].boardings_afc += 1;
            validations.push(ValidationRecord {
                card_id: row.card_id,
                timestamp: row.timestamp,
                course_id: row.course_id,
                station_id: row.station_id,
                line_id: course.key.line_id.clone(),
                direction: course.key.direction,
                service_date: course.key.service_date,
                boarding_seq: seq,
            });
        }

        if courses.is_empty() {
            return Err(IngestError::EmptyDataset);
        }
        Ok((
            Self {
                stations,
                routes,
                courses,
                validations,
                apc_coverage,
            },
            LoadReport { rejects: rejected },
        ))
    }

    pub fn is_covered(&self, course: &CourseId) -> bool {
        self.apc_coverage.contains(course)
    }

    /// Distinct lines, sorted.
    pub fn lines(&self) -> BTreeSet<LineId> {
        self.routes.keys().map(|(l, _)| l.clone()).collect()
    }

    /// Indices into `validations`, grouped by course.
    pub fn validations_by_course(&self) -> BTreeMap<CourseId, Vec<usize>> {
        let mut map: BTreeMap<CourseId, Vec<usize>> = BTreeMap::new();
        for (i, v) in self.validations.iter().enumerate() {
            map.entry(v.course_id.clone()).or_default().push(i);
        }
        map
    }

    /// Mean longitude and latitude of all stations.
    pub fn centroid(&self) -> (f64, f64) {
        let n = self.stations.len().max(1) as f64;
        let (lon, lat) = self
            .stations
            .values()
            .fold((0.0, 0.0), |(a, b), s| (a + s.lon, b + s.lat));
        (lon / n, lat / n)
    }

    /// Back to input-schema rows, in deterministic order.
    pub fn to_raw(&self) -> RawTables {
        let stations = self
            .stations
            .values()
            .map(|s| StationRow {
                station_id: s.station_id.clone(),
                name: s.name.clone(),
                lon: s.lon,
                lat: s.lat,
            })
            .collect();
        let routes = self
            .routes
            .iter()
            .flat_map(|((line, dir), stops)| {
                stops.iter().zip(1u32..).map(move |(sid, seq)| RouteRow {
                    line_id: line.clone(),
                    direction: *dir,
                    seq,
                    station_id: sid.clone(),
                })
            })
            .collect();
        let courses = self
            .courses
            .values()
            .map(|c| CourseRow {
                course_id: c.key.course_id.clone(),
                line_id: c.key.line_id.clone(),
                direction: c.key.direction,
                service_date: c.key.service_date,
                start_time: c.key.start_time,
            })
            .collect();
        let afc = self
            .validations
            .iter()
            .map(|v| AfcRow {
                card_id: v.card_id.clone(),
                timestamp: v.timestamp,
                course_id: v.course_id.clone(),
                station_id: v.station_id.clone(),
            })
            .collect();
        let apc = self
            .courses
            .values()
            .flat_map(|c| {
                c.stops.iter().filter_map(move |s| {
                    s.apc.map(|m| ApcRow {
                        course_id: c.key.course_id.clone(),
                        seq: s.seq,
                        boardings: m.boardings,
                        alightings: m.alightings,
                        occupancy_after: m.occupancy_after,
                    })
                })
            })
            .collect();
        RawTables {
            stations: RawTables::numbered(stations),
            routes: RawTables::numbered(routes),
            courses: RawTables::numbered(courses),
            afc: RawTables::numbered(afc),
            apc: RawTables::numbered(apc),
        }
    }

    /// Persists the accepted data in input schema plus a flat
    /// `stop_events.csv`, so any later stage can resume from `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), IngestError> {
        self.to_raw().write_dir(dir)?;
        let events: Vec<StopEventRow> = self
            .courses
            .values()
            .flat_map(|c| {
                c.stops.iter().map(move |s| StopEventRow {
                    course_id: c.key.course_id.clone(),
                    seq: s.seq,
                    station_id: s.station_id.clone(),
                    boardings_afc: s.boardings_afc,
                    apc_boardings: s.apc.and_then(|m| m.boardings),
                    apc_alightings: s.apc.and_then(|m| m.alightings),
                    apc_occupancy_after: s.apc.and_then(|m| m.occupancy_after),
                    covered: self.apc_coverage.contains(&c.key.course_id),
                })
            })
            .collect();
        write_csv(
            &dir.join(STOP_EVENTS_FILE),
            &[
                "course_id",
                "seq",
                "station_id",
                "boardings_afc",
                "apc_boardings",
                "apc_alightings",
                "apc_occupancy_after",
                "covered",
            ],
            &events,
        )
    }
}

#[derive(Debug, Clone, Serialize)]
struct StopEventRow {
    course_id: CourseId,
    seq: u32,
    station_id: StationId,
    boardings_afc: u32,
    apc_boardings: Option<u32>,
    apc_alightings: Option<u32>,
    apc_occupancy_after: Option<u32>,
    covered: bool,
}

/// APC coverage of one (line, direction).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineCoverage {
    pub line_id: LineId,
    pub direction: Direction,
    pub n_courses: usize,
    pub n_covered: usize,
    pub ratio: f64,
    /// No covered course at all: rates on this line can only come from
    /// the spatial model.
    pub kriging_only: bool,
}

pub fn coverage_summary(dataset: &NetworkDataset) -> Vec<LineCoverage> {
    let mut counts: BTreeMap<(LineId, Direction), (usize, usize)> = dataset
        .routes
        .keys()
        .map(|k| (k.clone(), (0, 0)))
        .collect();
    for course in dataset.courses.values() {
        let e = counts
            .entry((course.key.line_id.clone(), course.key.direction))
            .or_default();
        e.0 += 1;
        if dataset.is_covered(&course.key.course_id) {
            e.1 += 1;
        }
    }
    counts
        .into_iter()
        .map(|((line_id, direction), (n_courses, n_covered))| LineCoverage {
            line_id,
            direction,
            n_courses,
            n_covered,
            ratio: if n_courses == 0 {
                0.0
            } else {
                n_covered as f64 / n_courses as f64
            },
            kriging_only: n_covered == 0,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn station(id: &str, lon: f64) -> StationRow {
        StationRow {
            station_id: id.into(),
            name: id.to_uppercase(),
            lon,
            lat: 47.47,
        }
    }

    fn route(stops: &[&str]) -> Vec<RouteRow> {
        stops
            .iter()
            .zip(1u32..)
            .map(|(s, seq)| RouteRow {
                line_id: "L1".into(),
                direction: Direction::Outbound,
                seq,
                station_id: (*s).into(),
            })
            .collect()
    }

    fn course(id: &str, start: u32) -> CourseRow {
        CourseRow {
            course_id: id.into(),
            line_id: "L1".into(),
            direction: Direction::Outbound,
            service_date: NaiveDate::from_ymd_opt(2024, 3, 4).unwrap(),
            start_time: start,
        }
    }

    fn afc(card: Option<&str>, ts: i64, course: &str, station: &str) -> AfcRow {
        AfcRow {
            card_id: card.map(CardId::from),
            timestamp: ts,
            course_id: course.into(),
            station_id: station.into(),
        }
    }

    fn apc(course: &str, seq: u32, occ: u32) -> ApcRow {
        ApcRow {
            course_id: course.into(),
            seq,
            boardings: None,
            alightings: None,
            occupancy_after: Some(occ),
        }
    }

    fn fixture() -> RawTables {
        RawTables {
            stations: RawTables::numbered(vec![
                station("s1", -0.55),
                station("s2", -0.54),
                station("s3", -0.53),
            ]),
            routes: RawTables::numbered(route(&["s1", "s2", "s3"])),
            courses: RawTables::numbered(vec![course("c1", 28_800), course("c2", 32_400)]),
            afc: RawTables::numbered(vec![
                afc(Some("a"), 28_800, "c1", "s1"),
                afc(None, 28_900, "c1", "s2"),
                afc(Some("b"), 28_800, "c1", "s1"),
                afc(Some("a"), 32_500, "c2", "s2"),
                afc(None, 32_400, "c2", "s1"),
            ]),
            apc: RawTables::numbered(vec![
                apc("c1", 1, 3),
                apc("c1", 2, 4),
                apc("c1", 3, 0),
                apc("c2", 1, 1),
                apc("c2", 2, 2),
            ]),
        }
    }

    #[test]
    fn minimal_fixture_loads() {
        let (ds, report) = NetworkDataset::build(fixture(), &Config::default()).unwrap();
        assert_eq!(ds.courses.len(), 2);
        let total: u32 = ds
            .courses
            .values()
            .flat_map(|c| c.stops.iter().map(|s| s.boardings_afc))
            .sum();
        assert_eq!(total, 5);
        assert!(report.rejects.is_empty());
        // c2 carries APC on two of three stops only
        assert_eq!(ds.apc_coverage, BTreeSet::from([CourseId::from("c1")]));
    }

    #[test]
    fn unknown_station_is_rejected_and_load_continues() {
        let mut raw = fixture();
        raw.afc.push((7, afc(Some("z"), 28_800, "c1", "nowhere")));
        let (ds, report) = NetworkDataset::build(raw, &Config::default()).unwrap();
        assert_eq!(ds.validations.len(), 5);
        assert_eq!(report.rejects.len(), 1);
        assert_eq!(report.rejects[0].kind, RejectKind::Referential);
        assert_eq!(report.rejects[0].line, 7);
    }

    #[test]
    fn schedule_window_and_terminus_rules() {
        let mut raw = fixture();
        raw.afc = RawTables::numbered(vec![
            afc(None, 28_800 - 301, "c1", "s1"),
            afc(None, 28_800 - 300, "c1", "s1"),
            afc(None, 28_900, "c1", "s3"),
        ]);
        let (ds, report) = NetworkDataset::build(raw, &Config::default()).unwrap();
        assert_eq!(ds.validations.len(), 1);
        assert_eq!(report.count(RejectKind::Consistency), 2);
    }

    #[test]
    fn inconsistent_apc_leaves_course_uncovered() {
        let mut raw = fixture();
        raw.apc.push((9, apc("c2", 3, 1)));
        let (ds, report) = NetworkDataset::build(raw, &Config::default()).unwrap();
        assert!(!ds.is_covered(&"c2".into()));
        assert_eq!(report.count(RejectKind::Consistency), 1);
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let mut raw = fixture();
        raw.courses.clear();
        assert!(matches!(
            NetworkDataset::build(raw, &Config::default()),
            Err(IngestError::EmptyDataset)
        ));
    }

    #[test]
    fn missing_column_is_fatal_and_bad_row_is_rejected() {
        let mut rejects = Vec::new();
        let res: Result<Vec<(u64, StationRow)>, _> = read_table(
            "station_id,name,lon\ns1,A,0.1\n".as_bytes(),
            STATIONS_FILE,
            &["station_id", "name", "lon", "lat"],
            &mut rejects,
        );
        assert!(matches!(res, Err(IngestError::Schema { .. })));

        let rows: Vec<(u64, StationRow)> = read_table(
            "station_id,name,lon,lat\ns1,A,0.1,47\ns2,B,east,47\n".as_bytes(),
            STATIONS_FILE,
            &["station_id", "name", "lon", "lat"],
            &mut rejects,
        )
        .unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rejects.len(), 1);
        assert_eq!(rejects[0].line, 3);
    }

    #[test]
    fn anonymous_card_parses_as_none() {
        let mut rejects = Vec::new();
        let rows: Vec<(u64, AfcRow)> = read_table(
            "card_id,timestamp,course_id,station_id\n,100,c1,s1\nk9,101,c1,s1\n".as_bytes(),
            AFC_FILE,
            &["card_id", "timestamp", "course_id", "station_id"],
            &mut rejects,
        )
        .unwrap();
        assert_eq!(rows[0].1.card_id, None);
        assert_eq!(rows[1].1.card_id, Some(CardId::from("k9")));
    }

    #[test]
    fn coverage_ratios() {
        let mut raw = fixture();
        raw.routes.extend(RawTables::numbered(vec![
            RouteRow {
                line_id: "L2".into(),
                direction: Direction::Outbound,
                seq: 1,
                station_id: "s3".into(),
            },
            RouteRow {
                line_id: "L2".into(),
                direction: Direction::Outbound,
                seq: 2,
                station_id: "s1".into(),
            },
        ]));
        let mut c3 = course("c3", 30_000);
        c3.line_id = "L2".into();
        raw.courses.push((10, c3));
        let (ds, _) = NetworkDataset::build(raw, &Config::default()).unwrap();
        let summary = coverage_summary(&ds);
        assert_eq!(summary.len(), 2);
        assert_eq!(summary[0].ratio, 0.5);
        assert!(!summary[0].kriging_only);
        assert_eq!(summary[1].ratio, 0.0);
        assert!(summary[1].kriging_only);
    }
}
