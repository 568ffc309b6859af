//! Contextual-average baseline: the mean counted occupancy of courses
//! sharing line, direction, stop, day of week and departure quarter-hour.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::model::{CourseKey, Direction, LineId, StationId};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContextKey {
    pub line_id: LineId,
    pub direction: Direction,
    pub station_id: StationId,
    pub day_of_week: u8,
    /// `0..96`
    pub quarter_hour: u8,
}

impl ContextKey {
    pub fn new(course: &CourseKey, station_id: &StationId) -> Self {
        Self {
            line_id: course.line_id.clone(),
            direction: course.direction,
            station_id: station_id.clone(),
            day_of_week: course.day_of_week(),
            quarter_hour: course.quarter_hour(),
        }
    }

    fn at(&self, level: FallbackLevel) -> LevelKey {
        let (dow, qh) = match level {
            FallbackLevel::Full => (Some(self.day_of_week), Some(self.quarter_hour)),
            FallbackLevel::NoQuarterHour => (Some(self.day_of_week), None),
            FallbackLevel::NoDayOfWeek => (None, Some(self.quarter_hour)),
            FallbackLevel::LineStation => (None, None),
        };
        (
            level,
            self.line_id.clone(),
            self.direction,
            self.station_id.clone(),
            dow,
            qh,
        )
    }
}

/// Which key granularity produced a prediction, tried in this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackLevel {
    Full,
    NoQuarterHour,
    NoDayOfWeek,
    LineStation,
}

impl FallbackLevel {
    pub const CHAIN: [FallbackLevel; 4] = [
        FallbackLevel::Full,
        FallbackLevel::NoQuarterHour,
        FallbackLevel::NoDayOfWeek,
        FallbackLevel::LineStation,
    ];
}

type LevelKey = (FallbackLevel, LineId, Direction, StationId, Option<u8>, Option<u8>);

#[derive(Debug, Clone, PartialEq)]
pub enum ContextPrediction {
    Predicted {
        occupancy: Vec<f64>,
        levels: Vec<FallbackLevel>,
    },
    /// Some stop has no training data at any level, e.g. a line without counts.
    Unpredictable,
}

impl ContextPrediction {
    pub fn occupancy(&self) -> Option<&[f64]> {
        match self {
            ContextPrediction::Predicted { occupancy, .. } => Some(occupancy),
            ContextPrediction::Unpredictable => None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ContextualAverage {
    sums: BTreeMap<LevelKey, (f64, usize)>,
}

impl ContextualAverage {
    /// Trains on counted occupancy vectors `(course, stations, occupancy)`.
    pub fn fit<'a>(
        training: impl IntoIterator<Item = (&'a CourseKey, &'a [StationId], &'a [f64])>,
    ) -> Self {
        let mut sums: BTreeMap<LevelKey, (f64, usize)> = BTreeMap::new();
        for (course, stations, occupancy) in training {
            for (station, &o) in stations.iter().zip(occupancy) {
                let key = ContextKey::new(course, station);
                for level in FallbackLevel::CHAIN {
                    let e = sums.entry(key.at(level)).or_default();
                    e.0 += o;
                    e.1 += 1;
                }
            }
        }
        Self { sums }
    }

    pub fn lookup(&self, key: &ContextKey) -> Option<(f64, FallbackLevel)> {
        FallbackLevel::CHAIN.into_iter().find_map(|level| {
            self.sums
                .get(&key.at(level))
                .map(|&(sum, n)| (sum / n as f64, level))
        })
    }

    pub fn predict(&self, course: &CourseKey, stations: &[StationId]) -> ContextPrediction {
        let mut occupancy = Vec::with_capacity(stations.len());
        let mut levels = Vec::with_capacity(stations.len());
        for station in stations {
            match self.lookup(&ContextKey::new(course, station)) {
                Some((v, level)) => {
                    occupancy.push(v);
                    levels.push(level);
                }
                None => return ContextPrediction::Unpredictable,
            }
        }
        ContextPrediction::Predicted { occupancy, levels }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn key(line: &str, day: u32, start: u32) -> CourseKey {
        CourseKey {
            course_id: "c".into(),
            line_id: line.into(),
            direction: Direction::Outbound,
            service_date: NaiveDate::from_ymd_opt(2024, 3, day).unwrap(),
            start_time: start,
        }
    }

    fn st(ids: &[&str]) -> Vec<StationId> {
        ids.iter().map(|s| StationId::from(*s)).collect()
    }

    #[test]
    fn mean_at_full_key() {
        let s = st(&["a", "b"]);
        let (k1, k2) = (key("L1", 4, 30_000), key("L1", 4, 30_100));
        let (o1, o2) = ([8.0, 0.0], [12.0, 0.0]);
        let m = ContextualAverage::fit([(&k1, &s[..], &o1[..]), (&k2, &s[..], &o2[..])]);
        match m.predict(&key("L1", 11, 30_050), &s) {
            ContextPrediction::Predicted { occupancy, levels } => {
                assert_eq!(occupancy, vec![10.0, 0.0]);
                assert_eq!(levels, vec![FallbackLevel::Full; 2]);
            }
            ContextPrediction::Unpredictable => panic!(),
        }
    }

    #[test]
    fn falls_back_level_by_level() {
        let s = st(&["a", "b"]);
        // Monday 08:20 and Tuesday 10:00
        let (k1, k2) = (key("L1", 4, 30_000), key("L1", 5, 36_000));
        let (o1, o2) = ([4.0, 0.0], [6.0, 0.0]);
        let m = ContextualAverage::fit([(&k1, &s[..], &o1[..]), (&k2, &s[..], &o2[..])]);
        // Monday at another time: quarter-hour dropped
        let p = m.lookup(&ContextKey::new(&key("L1", 11, 50_000), &s[0])).unwrap();
        assert_eq!(p, (4.0, FallbackLevel::NoQuarterHour));
        // Wednesday 10:00: day of week dropped
        let p = m.lookup(&ContextKey::new(&key("L1", 6, 36_000), &s[0])).unwrap();
        assert_eq!(p, (6.0, FallbackLevel::NoDayOfWeek));
        // Wednesday noon: line/station mean
        let p = m.lookup(&ContextKey::new(&key("L1", 6, 43_200), &s[0])).unwrap();
        assert_eq!(p, (5.0, FallbackLevel::LineStation));
        assert_eq!(m.predict(&key("L2", 4, 30_000), &s), ContextPrediction::Unpredictable);
    }

    proptest! {
        #[test]
        fn prediction_within_training_range(
            occ in prop::collection::vec((0u32..60, 0u32..60), 1..30),
            starts in prop::collection::vec(0u32..86_400, 30),
            days in prop::collection::vec(4u32..18, 30),
            q in 0usize..30,
        ) {
            let s = st(&["a", "b", "z"]);
            let keys: Vec<CourseKey> = (0..occ.len()).map(|i| key("L1", days[i], starts[i])).collect();
            let vecs: Vec<[f64; 3]> = occ.iter().map(|&(a, b)| [f64::from(a), f64::from(b), 0.0]).collect();
            let m = ContextualAverage::fit(keys.iter().zip(&vecs).map(|(k, v)| (k, &s[..], &v[..])));
            let q = q % occ.len();
            let pred = m.predict(&keys[q], &s);
            let out = pred.occupancy().unwrap();
            for i in 0..3 {
                let lo = vecs.iter().map(|v| v[i]).fold(f64::INFINITY, f64::min);
                let hi = vecs.iter().map(|v| v[i]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(out[i] >= lo && out[i] <= hi);
            }
        }
    }
}
