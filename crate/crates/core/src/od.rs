//! Alighting inference for boarding-only validations: trip chaining for
//! card holders, then a seeded draw from the chained alighting
//! distribution for everything left over.

use std::collections::BTreeMap;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geostat::haversine_m;
use crate::ingest::{write_csv, IngestError, NetworkDataset};
use crate::model::{CardId, Course, CourseId, Direction, LineId, StationId};
use crate::occupancy::{occupancy_from_flows, FlowError};

pub const TRIPS_FILE: &str = "trips.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlightingMethod {
    /// Nearest downstream stop to the card's next boarding.
    Chained,
    /// Last trip of the day, chained back to the day's first boarding.
    ChainedDaywrap,
    FallbackProportional,
    FallbackUniform,
}

impl AlightingMethod {
    pub fn is_chained(self) -> bool {
        matches!(self, AlightingMethod::Chained | AlightingMethod::ChainedDaywrap)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconstructedTrip {
    /// Index into `NetworkDataset::validations`.
    pub validation: usize,
    pub card_id: Option<CardId>,
    pub course_id: CourseId,
    pub boarding_seq: u32,
    pub alighting_seq: u32,
    pub alighting_station_id: StationId,
    pub method: AlightingMethod,
}

fn nearest_downstream(
    ds: &NetworkDataset,
    course: &Course,
    boarding_seq: u32,
    target: &StationId,
    walk_radius_m: f64,
) -> Option<(u32, StationId)> {
    let t = ds.stations.get(target)?;
    course.stops[boarding_seq as usize..]
        .iter()
        .filter_map(|stop| {
            let s = ds.stations.get(&stop.station_id)?;
            Some((haversine_m(s.lon, s.lat, t.lon, t.lat), stop))
        })
        .filter(|(d, _)| *d <= walk_radius_m)
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.seq.cmp(&b.1.seq)))
        .map(|(_, stop)| (stop.seq, stop.station_id.clone()))
}

/// Links consecutive validations of each card within a service day. The
/// alighting of a trip is the stop of its remaining route nearest to the
/// next boarding, if within `walk_radius_m`; the day's last trip is
/// linked to the day's first boarding. Days with a single validation are
/// not chained.
pub fn chain_trips(ds: &NetworkDataset, walk_radius_m: f64) -> Vec<ReconstructedTrip> {
    let mut days: BTreeMap<(&CardId, chrono::NaiveDate), Vec<usize>> = BTreeMap::new();
    for (i, v) in ds.validations.iter().enumerate() {
        if let Some(card) = &v.card_id {
            days.entry((card, v.service_date)).or_default().push(i);
        }
    }
    let mut trips = Vec::new();
    for idx in days.into_values() {
        if idx.len() < 2 {
            continue;
        }
        let mut idx = idx;
        idx.sort_by_key(|&i| (ds.validations[i].timestamp, i));
        for (k, &i) in idx.iter().enumerate() {
            let v = &ds.validations[i];
            let (next, method) = match idx.get(k + 1) {
                Some(&j) => (j, AlightingMethod::Chained),
                None => (idx[0], AlightingMethod::ChainedDaywrap),
            };
            let Some(course) = ds.courses.get(&v.course_id) else {
                continue;
            };
            let target = &ds.validations[next].station_id;
            if let Some((seq, station)) =
                nearest_downstream(ds, course, v.boarding_seq, target, walk_radius_m)
            {
                trips.push(ReconstructedTrip {
                    validation: i,
                    card_id: v.card_id.clone(),
                    course_id: v.course_id.clone(),
                    boarding_seq: v.boarding_seq,
                    alighting_seq: seq,
                    alighting_station_id: station,
                    method,
                });
            }
        }
    }
    trips.sort_by_key(|t| t.validation);
    trips
}

/// Assigns an alighting to every validation not covered by `chained`.
///
/// Draws follow the chained alighting counts of trips boarding at the same
/// stop of the same (line, direction). Without such trips the counts of
/// the whole (line, direction), restricted to stops downstream of the
/// boarding, are used; with no history at all the draw is uniform over
/// downstream stops.
pub fn fallback_alightings(
    ds: &NetworkDataset,
    chained: &[ReconstructedTrip],
    seed: u64,
) -> Vec<ReconstructedTrip> {
    // boarding seq 0 holds the (line, direction) totals
    let mut history: BTreeMap<(&LineId, Direction, u32), Vec<u64>> = BTreeMap::new();
    let mut done = vec![false; ds.validations.len()];
    for t in chained {
        done[t.validation] = true;
        let v = &ds.validations[t.validation];
        let n = ds.courses.get(&v.course_id).map_or(0, Course::n_stops);
        for board in [0, t.boarding_seq] {
            let counts = history
                .entry((&v.line_id, v.direction, board))
                .or_insert_with(|| vec![0; n + 1]);
            if counts.len() <= t.alighting_seq as usize {
                counts.resize(t.alighting_seq as usize + 1, 0);
            }
            counts[t.alighting_seq as usize] += 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trips = Vec::new();
    for (i, v) in ds.validations.iter().enumerate() {
        if done[i] {
            continue;
        }
        let Some(course) = ds.courses.get(&v.course_id) else {
            continue;
        };
        let n = course.n_stops() as u32;
        let first = v.boarding_seq + 1;
        if first > n {
            continue;
        }
        let weights = |board: u32| -> Option<WeightedIndex<u64>> {
            let counts = history.get(&(&v.line_id, v.direction, board))?;
            let w = (first..=n).map(|s| counts.get(s as usize).copied().unwrap_or(0));
            WeightedIndex::new(w).ok()
        };
        let (seq, method) = match weights(v.boarding_seq).or_else(|| weights(0)) {
            Some(dist) => (first + dist.sample(&mut rng) as u32, AlightingMethod::FallbackProportional),
            None => (rng.random_range(first..=n), AlightingMethod::FallbackUniform),
        };
        trips.push(ReconstructedTrip {
            validation: i,
            card_id: v.card_id.clone(),
            course_id: v.course_id.clone(),
            boarding_seq: v.boarding_seq,
            alighting_seq: seq,
            alighting_station_id: course.stops[seq as usize - 1].station_id.clone(),
            method,
        });
    }
    trips
}

/// Alightings for every validation of a dataset, ordered by validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripSet {
    pub trips: Vec<ReconstructedTrip>,
}

#[derive(Debug, Clone, Serialize)]
struct TripRow<'a> {
    card_id: Option<&'a CardId>,
    course_id: &'a CourseId,
    boarding_seq: u32,
    alighting_seq: u32,
    method: AlightingMethod,
}

impl TripSet {
    pub fn reconstruct(ds: &NetworkDataset, walk_radius_m: f64, seed: u64) -> Self {
        let chained = chain_trips(ds, walk_radius_m);
        let fallback = fallback_alightings(ds, &chained, seed);
        let mut trips = chained;
        trips.extend(fallback);
        trips.sort_by_key(|t| t.validation);
        Self { trips }
    }

    pub fn by_course(&self) -> BTreeMap<&CourseId, Vec<&ReconstructedTrip>> {
        let mut map: BTreeMap<&CourseId, Vec<&ReconstructedTrip>> = BTreeMap::new();
        for t in &self.trips {
            map.entry(&t.course_id).or_default().push(t);
        }
        map
    }

    pub fn count(&self, method: AlightingMethod) -> usize {
        self.trips.iter().filter(|t| t.method == method).count()
    }

    /// Ticketing profile of every course in the dataset.
    pub fn ticketing_profiles(
        &self,
        ds: &NetworkDataset,
    ) -> Result<BTreeMap<CourseId, TicketingProfile>, FlowError> {
        let by_course = self.by_course();
        ds.courses
            .values()
            .map(|c| {
                let trips = by_course.get(&c.key.course_id).map_or(&[][..], Vec::as_slice);
                Ok((c.key.course_id.clone(), ticketing_profile(c, trips.iter().copied())?))
            })
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), IngestError> {
        let rows: Vec<TripRow<'_>> = self
            .trips
            .iter()
            .map(|t| TripRow {
                card_id: t.card_id.as_ref(),
                course_id: &t.course_id,
                boarding_seq: t.boarding_seq,
                alighting_seq: t.alighting_seq,
                method: t.method,
            })
            .collect();
        write_csv(
            path,
            &["card_id", "course_id", "boarding_seq", "alighting_seq", "method"],
            &rows,
        )
    }
}

/// Validated boardings `Y^V`, alightings `Z^V` and occupancy `O^V` of
/// one course.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TicketingProfile {
    pub boardings: Vec<u32>,
    pub alightings: Vec<u32>,
    pub occupancy: Vec<u32>,
}

pub fn ticketing_profile<'a>(
    course: &Course,
    trips: impl IntoIterator<Item = &'a ReconstructedTrip>,
) -> Result<TicketingProfile, FlowError> {
    let n = course.n_stops();
    let mut boardings = vec![0u32; n];
    let mut alightings = vec![0u32; n];
    for t in trips {
        boardings[t.boarding_seq as usize - 1] += 1;
        alightings[t.alighting_seq as usize - 1] += 1;
    }
    let occupancy = occupancy_from_flows(&boardings, &alightings)?;
    Ok(TicketingProfile {
        boardings,
        alightings,
        occupancy,
    })
}
