//! Synthetic networks with known ground truth: a radial network around a
//! hub, Poisson demand, per-passenger fare evasion drawn from a smooth
//! spatial field, and exact counts on a random subset of courses.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Days, NaiveDate};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Poisson, StandardNormal};
use serde::Serialize;

use crate::config::{key_values, parse, ConfigError};
use crate::error::{Error, Result};
use crate::geostat::linalg::{cholesky, Matrix};
use crate::geostat::{GeostatError, Projection, VariogramModel};
use crate::ingest::{
    write_csv, AfcRow, ApcRow, CourseRow, IngestError, RawTables, RouteRow, StationRow,
};
use crate::model::{CardId, CourseId, Direction, LineId, StationId};
use crate::occupancy::occupancy_from_flows;

pub const TRUTH_OCCUPANCY_FILE: &str = "truth_occupancy.csv";
pub const TRUTH_FIELD_FILE: &str = "truth_field.csv";
pub const TRUTH_TRIPS_FILE: &str = "truth_trips.csv";

pub const HUB_ID: &str = "HUB";

/// Gaussian bump of the fraud probability field, in km around the
/// scenario origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bump {
    pub x_km: f64,
    pub y_km: f64,
    pub amplitude: f64,
    pub width_km: f64,
}

/// Per-passenger fare-evasion probability over the plane, capped at 0.5.
#[derive(Debug, Clone, PartialEq)]
pub struct FraudField {
    pub base: f64,
    pub bumps: Vec<Bump>,
}

impl FraudField {
    pub const CAP: f64 = 0.5;

    pub fn uniform(p: f64) -> Self {
        Self {
            base: p,
            bumps: Vec::new(),
        }
    }

    pub fn probability(&self, x: f64, y: f64) -> f64 {
        let bumps: f64 = self
            .bumps
            .iter()
            .map(|b| {
                let d2 = (x - b.x_km).powi(2) + (y - b.y_km).powi(2);
                b.amplitude * (-d2 / (2.0 * b.width_km * b.width_km)).exp()
            })
            .sum();
        (self.base + bumps).min(Self::CAP)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if !(0.0..=Self::CAP).contains(&self.base) {
            return Err(format!("fraud_base {} outside [0, 0.5]", self.base));
        }
        for b in &self.bumps {
            if !(0.0..=Self::CAP).contains(&b.amplitude) {
                return Err(format!("bump amplitude {} outside [0, 0.5]", b.amplitude));
            }
            if !(b.width_km > 0.0 && b.width_km.is_finite()) {
                return Err(format!("bump width {} must be positive", b.width_km));
            }
            if !(b.x_km.is_finite() && b.y_km.is_finite()) {
                return Err("bump centre must be finite".into());
            }
        }
        Ok(())
    }
}

impl Default for FraudField {
    fn default() -> Self {
        Self {
            base: 0.0,
            // between L1 and L2, about 6 km out from the hub
            bumps: vec![Bump {
                x_km: 4.08,
                y_km: 4.40,
                amplitude: 0.3,
                width_km: 4.0,
            }],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub n_lines: usize,
    pub stops_per_line: usize,
    pub stop_spacing_km: f64,
    pub position_jitter_km: f64,
    /// Adds one more line running over exactly the stations of `L1`.
    pub shared_line: bool,
    /// Departures alternate between outbound and inbound.
    pub courses_per_line_per_day: usize,
    pub n_days: usize,
    pub start_date: NaiveDate,
    pub service_start_s: u32,
    pub service_end_s: u32,
    pub stop_interval_s: u32,
    /// Mean number of first-leg boardings per course and non-terminal stop.
    pub boarding_rate: f64,
    /// Share of courses carrying counts.
    pub coverage: f64,
    pub fraud: FraudField,
    /// Length scale of the exponential decay of alighting weights with
    /// distance along the route.
    pub trip_scale_km: f64,
    /// Multiplier on the alighting weight of the hub, the city centre of
    /// the radial network.
    pub hub_attraction: f64,
    /// Probability that a traveler rides back on the same line later the
    /// same day.
    pub return_share: f64,
    /// Time spent at the destination before the return; shortened when
    /// it would miss the last course back.
    pub activity_min_s: u32,
    pub activity_max_s: u32,
    pub anonymous_share: f64,
    /// Symmetric ±1 noise on counted occupancies (counts then carry only
    /// occupancy, no flows).
    pub apc_noise: bool,
    pub lon0: f64,
    pub lat0: f64,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            n_lines: 6,
            stops_per_line: 15,
            stop_spacing_km: 0.6,
            position_jitter_km: 0.1,
            shared_line: false,
            courses_per_line_per_day: 40,
            n_days: 14,
            start_date: NaiveDate::from_ymd_opt(2024, 3, 4).expect("valid date"),
            service_start_s: 6 * 3600,
            service_end_s: 22 * 3600,
            stop_interval_s: 120,
            boarding_rate: 8.0,
            coverage: 0.3,
            fraud: FraudField::default(),
            trip_scale_km: 1.0,
            hub_attraction: 3.0,
            return_share: 1.0,
            activity_min_s: 1800,
            activity_max_s: 4 * 3600,
            anonymous_share: 0.0,
            apc_noise: false,
            lon0: -0.55,
            lat0: 47.47,
            seed: 42,
        }
    }
}

fn invalid(e: ConfigError) -> Error {
    Error::InvalidScenario(e.to_string())
}

fn parse_bump(line: usize, value: &str) -> std::result::Result<Bump, ConfigError> {
    let bad = || ConfigError::InvalidValue {
        line,
        key: "fraud_bump".into(),
        value: value.to_owned(),
    };
    let parts: Vec<f64> = value
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad())?;
    match parts[..] {
        [x_km, y_km, amplitude, width_km] => Ok(Bump {
            x_km,
            y_km,
            amplitude,
            width_km,
        }),
        _ => Err(bad()),
    }
}

impl Scenario {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::parse_str(&text)
    }

    /// `key=value` lines over the defaults. `fraud_bump = x,y,amplitude,width`
    /// may repeat; the first occurrence replaces the default bumps and
    /// `fraud_bump = none` clears them.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut s = Self::default();
        let mut bumps_seen = false;
        for (line, key, value) in key_values(text).map_err(invalid)? {
            match key {
                "n_lines" => s.n_lines = parse(line, key, value).map_err(invalid)?,
                "stops_per_line" => s.stops_per_line = parse(line, key, value).map_err(invalid)?,
                "stop_spacing_km" => s.stop_spacing_km = parse(line, key, value).map_err(invalid)?,
                "position_jitter_km" => {
                    s.position_jitter_km = parse(line, key, value).map_err(invalid)?
                }
                "shared_line" => s.shared_line = parse(line, key, value).map_err(invalid)?,
                "courses_per_line_per_day" => {
                    s.courses_per_line_per_day = parse(line, key, value).map_err(invalid)?
                }
                "n_days" => s.n_days = parse(line, key, value).map_err(invalid)?,
                "start_date" => s.start_date = parse(line, key, value).map_err(invalid)?,
                "service_start_s" => s.service_start_s = parse(line, key, value).map_err(invalid)?,
                "service_end_s" => s.service_end_s = parse(line, key, value).map_err(invalid)?,
                "stop_interval_s" => s.stop_interval_s = parse(line, key, value).map_err(invalid)?,
                "boarding_rate" => s.boarding_rate = parse(line, key, value).map_err(invalid)?,
                "coverage" => s.coverage = parse(line, key, value).map_err(invalid)?,
                "fraud_base" => s.fraud.base = parse(line, key, value).map_err(invalid)?,
                "fraud_bump" => {
                    if !bumps_seen {
                        s.fraud.bumps.clear();
                        bumps_seen = true;
                    }
                    if value != "none" {
                        s.fraud.bumps.push(parse_bump(line, value).map_err(invalid)?);
                    }
                }
                "trip_scale_km" => s.trip_scale_km = parse(line, key, value).map_err(invalid)?,
                "hub_attraction" => s.hub_attraction = parse(line, key, value).map_err(invalid)?,
                "return_share" => s.return_share = parse(line, key, value).map_err(invalid)?,
                "activity_min_s" => s.activity_min_s = parse(line, key, value).map_err(invalid)?,
                "activity_max_s" => s.activity_max_s = parse(line, key, value).map_err(invalid)?,
                "anonymous_share" => s.anonymous_share = parse(line, key, value).map_err(invalid)?,
                "apc_noise" => s.apc_noise = parse(line, key, value).map_err(invalid)?,
                "lon0" => s.lon0 = parse(line, key, value).map_err(invalid)?,
                "lat0" => s.lat0 = parse(line, key, value).map_err(invalid)?,
                "seed" => s.seed = parse(line, key, value).map_err(invalid)?,
                _ => {
                    return Err(invalid(ConfigError::UnknownKey {
                        line,
                        key: key.to_owned(),
                    }))
                }
            }
        }
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidScenario(msg.to_owned()))
            }
        };
        check(self.n_lines >= 1, "n_lines must be at least 1")?;
        check(self.stops_per_line >= 2, "stops_per_line must be at least 2")?;
        check(self.courses_per_line_per_day >= 1, "courses_per_line_per_day must be at least 1")?;
        check(self.n_days >= 1, "n_days must be at least 1")?;
        check(
            self.stop_spacing_km > 0.0 && self.stop_spacing_km.is_finite(),
            "stop_spacing_km must be positive",
        )?;
        check(
            self.position_jitter_km >= 0.0 && self.position_jitter_km < self.stop_spacing_km / 2.0,
            "position_jitter_km must be in [0, stop_spacing_km / 2)",
        )?;
        check(self.service_end_s > self.service_start_s, "service_end_s must follow service_start_s")?;
        check(self.stop_interval_s >= 1, "stop_interval_s must be at least 1")?;
        check(
            self.boarding_rate >= 0.0 && self.boarding_rate.is_finite(),
            "boarding_rate must be finite and nonnegative",
        )?;
        check((0.0..=1.0).contains(&self.coverage), "coverage must be in [0, 1]")?;
        check((0.0..=1.0).contains(&self.return_share), "return_share must be in [0, 1]")?;
        check((0.0..=1.0).contains(&self.anonymous_share), "anonymous_share must be in [0, 1]")?;
        check(
            self.trip_scale_km > 0.0 && self.trip_scale_km.is_finite(),
            "trip_scale_km must be positive",
        )?;
        check(
            self.hub_attraction > 0.0 && self.hub_attraction.is_finite(),
            "hub_attraction must be positive",
        )?;
        check(self.activity_min_s <= self.activity_max_s, "activity_min_s exceeds activity_max_s")?;
        check(
            (-180.0..=180.0).contains(&self.lon0) && (-80.0..=80.0).contains(&self.lat0),
            "origin out of range",
        )?;
        self.fraud.validate().map_err(Error::InvalidScenario)
    }

    pub fn n_courses(&self) -> usize {
        (self.n_lines + usize::from(self.shared_line)) * self.courses_per_line_per_day * self.n_days
    }
}

/// One passenger leg.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TruthTrip {
    pub passenger: u64,
    pub card_id: Option<CardId>,
    pub course_id: CourseId,
    pub boarding_seq: u32,
    pub alighting_seq: u32,
    pub fraud: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthStation {
    pub station_id: StationId,
    pub x_km: f64,
    pub y_km: f64,
    /// Fare-evasion probability of a passenger boarding here.
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruthCourse {
    pub stations: Vec<StationId>,
    pub boardings: Vec<u32>,
    pub alightings: Vec<u32>,
    pub fraud_boardings: Vec<u32>,
    pub occupancy: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Truth {
    pub courses: BTreeMap<CourseId, TruthCourse>,
    pub stations: BTreeMap<StationId, TruthStation>,
    pub trips: Vec<TruthTrip>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthNetwork {
    pub raw: RawTables,
    pub truth: Truth,
    /// Projection whose origin is the scenario origin; truth coordinates
    /// are expressed in it.
    pub projection: Projection,
}

/// Ratio of expected evaders to expected validated passengers for a
/// boarding probability `p`.
pub fn oracle_rate(p: f64) -> f64 {
    p / (1.0 - p)
}

pub fn oracle_rates(truth: &Truth) -> BTreeMap<StationId, f64> {
    truth
        .stations
        .iter()
        .map(|(id, s)| (id.clone(), oracle_rate(s.p)))
        .collect()
}

struct Line {
    id: LineId,
    /// Station indices in outbound order, hub first.
    stations: Vec<usize>,
}

struct Route {
    stations: Vec<usize>,
    /// Alighting position sampler per boarding position.
    alight: Vec<Option<WeightedIndex<f64>>>,
}

struct SynthCourse {
    id: CourseId,
    line: usize,
    direction: Direction,
    day: usize,
    start: u32,
}

impl SynthCourse {
    fn route(&self) -> usize {
        2 * self.line + usize::from(self.direction == Direction::Inbound)
    }
}

struct Leg {
    passenger: u64,
    card: Option<CardId>,
    course: usize,
    board: usize,
    alight: usize,
}

fn make_route(stations: Vec<usize>, xy: &[(f64, f64)], s: &Scenario) -> Route {
    let mut cum = vec![0.0];
    for w in stations.windows(2) {
        let (a, b) = (xy[w[0]], xy[w[1]]);
        let last = *cum.last().expect("non-empty");
        cum.push(last + (a.0 - b.0).hypot(a.1 - b.1));
    }
    let n = stations.len();
    let alight = (0..n)
        .map(|i| {
            (i + 1 < n).then(|| {
                let w = (i + 1..n).map(|j| {
                    let pull = if stations[j] == 0 { s.hub_attraction } else { 1.0 };
                    pull * (-(cum[j] - cum[i]) / s.trip_scale_km).exp()
                });
                WeightedIndex::new(w).expect("positive weights")
            })
        })
        .collect();
    Route { stations, alight }
}

/// Generates the network, its input tables and the ground truth.
pub fn generate(s: &Scenario) -> Result<SynthNetwork> {
    s.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let projection = Projection::new(s.lon0, s.lat0);

    // geometry
    let mut station_ids = vec![StationId::from(HUB_ID)];
    let mut names = vec!["Hub".to_owned()];
    let mut xy = vec![(0.0, 0.0)];
    let mut lines = Vec::new();
    for k in 0..s.n_lines {
        let theta = std::f64::consts::TAU * k as f64 / s.n_lines as f64 + 0.3;
        let mut stops = vec![0];
        for j in 1..s.stops_per_line {
            let r = j as f64 * s.stop_spacing_km;
            let jx = rng.random_range(-1.0..=1.0) * s.position_jitter_km;
            let jy = rng.random_range(-1.0..=1.0) * s.position_jitter_km;
            stops.push(xy.len());
            station_ids.push(StationId::new(format!("L{}S{:02}", k + 1, j)));
            names.push(format!("Line {} stop {}", k + 1, j));
            xy.push((r * theta.cos() + jx, r * theta.sin() + jy));
        }
        lines.push(Line {
            id: LineId::new(format!("L{}", k + 1)),
            stations: stops,
        });
    }
    if s.shared_line {
        let stations = lines[0].stations.clone();
        lines.push(Line {
            id: LineId::new(format!("L{}", s.n_lines + 1)),
            stations,
        });
    }
    let p_station: Vec<f64> = xy.iter().map(|&(x, y)| s.fraud.probability(x, y)).collect();
    let routes: Vec<Route> = lines
        .iter()
        .flat_map(|l| {
            let out = l.stations.clone();
            let mut inb = out.clone();
            inb.reverse();
            [
                make_route(out, &xy, s),
                make_route(inb, &xy, s),
            ]
        })
        .collect();

    // timetable
    let mut courses = Vec::with_capacity(s.n_courses());
    let headway = f64::from(s.service_end_s - s.service_start_s) / s.courses_per_line_per_day as f64;
    for day in 0..s.n_days {
        let date = s.start_date + Days::new(day as u64);
        for (li, line) in lines.iter().enumerate() {
            for c in 0..s.courses_per_line_per_day {
                courses.push(SynthCourse {
                    id: CourseId::new(format!("{}-{}-{:03}", line.id, date.format("%Y%m%d"), c)),
                    line: li,
                    direction: if c % 2 == 0 {
                        Direction::Outbound
                    } else {
                        Direction::Inbound
                    },
                    day,
                    start: s.service_start_s + (c as f64 * headway).round() as u32,
                });
            }
        }
    }
    // per (day, line, direction): course indices in departure order
    let mut timetable: BTreeMap<(usize, usize, Direction), Vec<usize>> = BTreeMap::new();
    for (ci, c) in courses.iter().enumerate() {
        timetable.entry((c.day, c.line, c.direction)).or_default().push(ci);
    }

    // demand
    let poisson = (s.boarding_rate > 0.0)
        .then(|| Poisson::new(s.boarding_rate).expect("positive finite rate"));
    let mut legs = Vec::new();
    let mut returns = Vec::new();
    let mut passenger = 0u64;
    for (ci, c) in courses.iter().enumerate() {
        let route = &routes[c.route()];
        let n = route.stations.len();
        for i in 0..n - 1 {
            let k = poisson.as_ref().map_or(0, |d| d.sample(&mut rng) as u64);
            for _ in 0..k {
                let j = i + 1 + route.alight[i].as_ref().expect("non-terminal").sample(&mut rng);
                let card = (!rng.random_bool(s.anonymous_share))
                    .then(|| CardId::new(format!("k{passenger:08}")));
                if rng.random_bool(s.return_share) {
                    let activity = rng.random_range(s.activity_min_s..=s.activity_max_s);
                    let arrived = c.start + j as u32 * s.stop_interval_s;
                    let ready = arrived + activity;
                    // the same stations, in reverse order
                    let (board, alight) = (n - 1 - j, n - 1 - i);
                    // late in the day the activity is cut short to catch the
                    // last course back
                    let back = timetable
                        .get(&(c.day, c.line, c.direction.opposite()))
                        .and_then(|list| {
                            let at = |b: usize| courses[b].start + board as u32 * s.stop_interval_s;
                            list.iter()
                                .copied()
                                .find(|&b| at(b) >= ready)
                                .or_else(|| list.last().copied().filter(|&b| at(b) > arrived))
                        });
                    if let Some(b) = back {
                        returns.push(Leg {
                            passenger,
                            card: card.clone(),
                            course: b,
                            board,
                            alight,
                        });
                    }
                }
                legs.push(Leg {
                    passenger,
                    card,
                    course: ci,
                    board: i,
                    alight: j,
                });
                passenger += 1;
            }
        }
    }
    legs.extend(returns);
    let mut truth_trips = Vec::with_capacity(legs.len());
    for leg in &legs {
        let station = routes[courses[leg.course].route()].stations[leg.board];
        truth_trips.push(TruthTrip {
            passenger: leg.passenger,
            card_id: leg.card.clone(),
            course_id: courses[leg.course].id.clone(),
            boarding_seq: leg.board as u32 + 1,
            alighting_seq: leg.alight as u32 + 1,
            fraud: rng.random_bool(p_station[station]),
        });
    }

    // flows per course
    let mut flows: Vec<(Vec<u32>, Vec<u32>, Vec<u32>)> = courses
        .iter()
        .map(|c| {
            let n = routes[c.route()].stations.len();
            (vec![0; n], vec![0; n], vec![0; n])
        })
        .collect();
    for (leg, t) in legs.iter().zip(&truth_trips) {
        let f = &mut flows[leg.course];
        f.0[leg.board] += 1;
        f.1[leg.alight] += 1;
        if t.fraud {
            f.2[leg.board] += 1;
        }
    }

    // counted courses
    let mut order: Vec<usize> = (0..courses.len()).collect();
    order.shuffle(&mut rng);
    let n_cov = (s.coverage * courses.len() as f64).round() as usize;
    let mut covered = vec![false; courses.len()];
    for &ci in &order[..n_cov] {
        covered[ci] = true;
    }

    let mut raw = RawTables::default();
    let mut truth = Truth::default();
    for (idx, id) in station_ids.iter().enumerate() {
        let (lon, lat) = projection.unproject(xy[idx].0, xy[idx].1);
        raw.stations.push((
            idx as u64 + 2,
            StationRow {
                station_id: id.clone(),
                name: names[idx].clone(),
                lon,
                lat,
            },
        ));
        truth.stations.insert(
            id.clone(),
            TruthStation {
                station_id: id.clone(),
                x_km: xy[idx].0,
                y_km: xy[idx].1,
                p: p_station[idx],
            },
        );
    }
    for (li, line) in lines.iter().enumerate() {
        for (dir, route) in [Direction::Outbound, Direction::Inbound]
            .into_iter()
            .zip(&routes[2 * li..2 * li + 2])
        {
            for (pos, &st) in route.stations.iter().enumerate() {
                raw.routes.push((
                    0,
                    RouteRow {
                        line_id: line.id.clone(),
                        direction: dir,
                        seq: pos as u32 + 1,
                        station_id: station_ids[st].clone(),
                    },
                ));
            }
        }
    }
    for (ci, c) in courses.iter().enumerate() {
        raw.courses.push((
            0,
            CourseRow {
                course_id: c.id.clone(),
                line_id: lines[c.line].id.clone(),
                direction: c.direction,
                service_date: s.start_date + Days::new(c.day as u64),
                start_time: c.start,
            },
        ));
        let (b, a, f) = &flows[ci];
        let occupancy = occupancy_from_flows(b, a)?;
        if covered[ci] {
            for pos in 0..b.len() {
                let row = if s.apc_noise {
                    let mut o = occupancy[pos];
                    if pos + 1 < b.len() {
                        match rng.random_range(0..3) {
                            0 => o = o.saturating_sub(1),
                            1 => o += 1,
                            _ => {}
                        }
                    }
                    ApcRow {
                        course_id: c.id.clone(),
                        seq: pos as u32 + 1,
                        boardings: None,
                        alightings: None,
                        occupancy_after: Some(o),
                    }
                } else {
                    ApcRow {
                        course_id: c.id.clone(),
                        seq: pos as u32 + 1,
                        boardings: Some(b[pos]),
                        alightings: Some(a[pos]),
                        occupancy_after: Some(occupancy[pos]),
                    }
                };
                raw.apc.push((0, row));
            }
        }
        truth.courses.insert(
            c.id.clone(),
            TruthCourse {
                stations: routes[c.route()]
                    .stations
                    .iter()
                    .map(|&st| station_ids[st].clone())
                    .collect(),
                boardings: b.clone(),
                alightings: a.clone(),
                fraud_boardings: f.clone(),
                occupancy,
            },
        );
    }
    let mut afc: Vec<(usize, usize, AfcRow)> = legs
        .iter()
        .zip(&truth_trips)
        .filter(|(_, t)| !t.fraud)
        .map(|(leg, _)| {
            let c = &courses[leg.course];
            let station = routes[c.route()].stations[leg.board];
            (
                leg.course,
                leg.board,
                AfcRow {
                    card_id: leg.card.clone(),
                    timestamp: i64::from(c.start + leg.board as u32 * s.stop_interval_s),
                    course_id: c.id.clone(),
                    station_id: station_ids[station].clone(),
                },
            )
        })
        .collect();
    afc.sort_by_key(|(c, b, _)| (*c, *b));
    raw.afc = afc.into_iter().map(|(_, _, r)| (0, r)).collect();
    for table in [
        &mut raw.routes as &mut dyn Renumber,
        &mut raw.courses,
        &mut raw.afc,
        &mut raw.apc,
    ] {
        table.renumber();
    }
    truth.trips = truth_trips;
    Ok(SynthNetwork {
        raw,
        truth,
        projection,
    })
}

trait Renumber {
    fn renumber(&mut self);
}

impl<T> Renumber for Vec<(u64, T)> {
    /// File line numbers, the header being line 1.
    fn renumber(&mut self) {
        for (i, row) in self.iter_mut().enumerate() {
            row.0 = i as u64 + 2;
        }
    }
}

#[derive(Serialize)]
struct TruthOccupancyRow<'a> {
    course_id: &'a CourseId,
    seq: usize,
    station_id: &'a StationId,
    boardings: u32,
    alightings: u32,
    fraud_boardings: u32,
    occupancy: u32,
}

#[derive(Serialize)]
struct TruthFieldRow<'a> {
    station_id: &'a StationId,
    x_km: f64,
    y_km: f64,
    p: f64,
    oracle_rate: f64,
}

impl SynthNetwork {
    /// Input tables plus the three truth files.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        self.raw.write_dir(dir)?;
        let occ: Vec<TruthOccupancyRow<'_>> = self
            .truth
            .courses
            .iter()
            .flat_map(|(id, c)| {
                (0..c.stations.len()).map(move |i| TruthOccupancyRow {
                    course_id: id,
                    seq: i + 1,
                    station_id: &c.stations[i],
                    boardings: c.boardings[i],
                    alightings: c.alightings[i],
                    fraud_boardings: c.fraud_boardings[i],
                    occupancy: c.occupancy[i],
                })
            })
            .collect();
        write_csv(
            &dir.join(TRUTH_OCCUPANCY_FILE),
            &[
                "course_id",
                "seq",
                "station_id",
                "boardings",
                "alightings",
                "fraud_boardings",
                "occupancy",
            ],
            &occ,
        )?;
        let field: Vec<TruthFieldRow<'_>> = self
            .truth
            .stations
            .values()
            .map(|s| TruthFieldRow {
                station_id: &s.station_id,
                x_km: s.x_km,
                y_km: s.y_km,
                p: s.p,
                oracle_rate: oracle_rate(s.p),
            })
            .collect();
        write_csv(
            &dir.join(TRUTH_FIELD_FILE),
            &["station_id", "x_km", "y_km", "p", "oracle_rate"],
            &field,
        )?;
        write_csv(
            &dir.join(TRUTH_TRIPS_FILE),
            &["passenger", "card_id", "course_id", "boarding_seq", "alighting_seq", "fraud"],
            &self.truth.trips,
        )?;
        Ok(())
    }
}

/// Draws one realisation of a Gaussian random field with the covariance
/// implied by `model` at the given locations.
pub fn sample_gaussian_field<R: Rng + ?Sized>(
    points: &[(f64, f64)],
    model: &VariogramModel,
    mean: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let n = points.len();
    let cov = Matrix::from_fn(n, |i, j| {
        let (a, b) = (points[i], points[j]);
        let h = if i == j { 0.0 } else { (a.0 - b.0).hypot(a.1 - b.1) };
        model.covariance(h) + if i == j { 1e-12 } else { 0.0 }
    });
    let l = cholesky(&cov).ok_or_else(|| {
        GeostatError::SingularSystem("field covariance is not positive definite".into())
    })?;
    let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    Ok((0..n)
        .map(|i| mean + (0..=i).map(|j| l.get(i, j) * z[j]).sum::<f64>())
        .collect())
}
