//! Domain types shared across the pipeline.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

macro_rules! id_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

id_newtype!(
    /// Opaque station identifier, unique within a network.
    StationId
);
id_newtype!(
    /// Opaque line identifier.
    LineId
);
id_newtype!(
    /// Opaque course identifier, unique within a service date.
    CourseId
);
id_newtype!(
    /// Smart-card identifier. Anonymous media carry none.
    CardId
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Outbound,
    Inbound,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Outbound => "outbound",
            Direction::Inbound => "inbound",
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Direction::Outbound => Direction::Inbound,
            Direction::Inbound => Direction::Outbound,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown direction `{0}` (expected `outbound` or `inbound`)")]
pub struct ParseDirectionError(pub String);

impl FromStr for Direction {
    type Err = ParseDirectionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "outbound" | "out" | "0" => Ok(Direction::Outbound),
            "inbound" | "in" | "1" => Ok(Direction::Inbound),
            other => Err(ParseDirectionError(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StationError {
    #[error("station {id}: longitude {lon} outside [-180, 180]")]
    Longitude { id: StationId, lon: f64 },
    #[error("station {id}: latitude {lat} outside [-90, 90]")]
    Latitude { id: StationId, lat: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub station_id: StationId,
    pub name: String,
    pub lon: f64,
    pub lat: f64,
}

impl Station {
    pub fn new(
        station_id: StationId,
        name: impl Into<String>,
        lon: f64,
        lat: f64,
    ) -> Result<Self, StationError> {
        if !(-180.0..=180.0).contains(&lon) {
            return Err(StationError::Longitude { id: station_id, lon });
        }
        if !(-90.0..=90.0).contains(&lat) {
            return Err(StationError::Latitude { id: station_id, lat });
        }
        Ok(Self {
            station_id,
            name: name.into(),
            lon,
            lat,
        })
    }
}

/// Identity of one scheduled run of a vehicle.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CourseKey {
    pub course_id: CourseId,
    pub line_id: LineId,
    pub direction: Direction,
    pub service_date: NaiveDate,
    /// Seconds since service-day midnight.
    pub start_time: u32,
}

impl CourseKey {
    /// 0 = Monday.
    pub fn day_of_week(&self) -> u8 {
        self.service_date.weekday().num_days_from_monday() as u8
    }

    /// Quarter-hour slot of the departure, in `0..96`. Departures past
    /// midnight wrap onto the same day's slots.
    pub fn quarter_hour(&self) -> u8 {
        ((self.start_time % 86_400) / 900) as u8
    }
}

/// Counting-cell measure at one stop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ApcMeasure {
    pub boardings: Option<u32>,
    pub alightings: Option<u32>,
    pub occupancy_after: Option<u32>,
}

impl ApcMeasure {
    pub fn occupancy(occupancy_after: u32) -> Self {
        Self {
            occupancy_after: Some(occupancy_after),
            ..Self::default()
        }
    }

    pub fn flows(boardings: u32, alightings: u32) -> Self {
        Self {
            boardings: Some(boardings),
            alightings: Some(alightings),
            occupancy_after: None,
        }
    }

    pub fn has_flows(&self) -> bool {
        self.boardings.is_some() && self.alightings.is_some()
    }

    /// Either an occupancy or a full pair of flows must be present.
    pub fn is_usable(&self) -> bool {
        self.occupancy_after.is_some() || self.has_flows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopEvent {
    pub station_id: StationId,
    /// 1-based position on the course.
    pub seq: u32,
    pub boardings_afc: u32,
    pub apc: Option<ApcMeasure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Course {
    pub key: CourseKey,
    pub stops: Vec<StopEvent>,
}

impl Course {
    pub fn id(&self) -> &CourseId {
        &self.key.course_id
    }

    pub fn n_stops(&self) -> usize {
        self.stops.len()
    }

    pub fn station_ids(&self) -> impl Iterator<Item = &StationId> {
        self.stops.iter().map(|s| &s.station_id)
    }

    pub fn has_full_apc(&self) -> bool {
        !self.stops.is_empty() && self.stops.iter().all(|s| s.apc.is_some())
    }

    /// 1-based position of `station` on the course, if served.
    pub fn seq_of(&self, station: &StationId) -> Option<u32> {
        self.stops
            .iter()
            .find(|s| &s.station_id == station)
            .map(|s| s.seq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileSource {
    ApcMeasured,
    UnifiedMeanRate,
    UnifiedKriged,
    Baseline,
}

impl ProfileSource {
    pub fn as_str(self) -> &'static str {
        match self {
            ProfileSource::ApcMeasured => "apc_measured",
            ProfileSource::UnifiedMeanRate => "unified_mean_rate",
            ProfileSource::UnifiedKriged => "unified_kriged",
            ProfileSource::Baseline => "baseline",
        }
    }
}

impl fmt::Display for ProfileSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProfileError {
    #[error("profile vectors have mismatched lengths")]
    LengthMismatch,
    #[error("profile has fewer than two stops")]
    TooShort,
    #[error("negative or non-finite entry at seq {seq}")]
    InvalidEntry { seq: usize },
    #[error("vehicle not empty after the last stop")]
    NotEmptyAtEnd,
}

/// Per-course occupancy split into validated and fare-evading passengers.
///
/// `total[i] == ticketing[i] + fraud[i]` holds for every stop, and the last
/// entry of `total` and `ticketing` is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyProfile {
    pub course: CourseKey,
    pub stations: Vec<StationId>,
    pub ticketing: Vec<f64>,
    pub fraud: Vec<f64>,
    pub total: Vec<f64>,
    pub alightings_ticketing: Vec<f64>,
    pub source: ProfileSource,
}

impl OccupancyProfile {
    /// Builds a profile with `total = ticketing + fraud`, checking the
    /// profile invariants.
    pub fn new(
        course: CourseKey,
        stations: Vec<StationId>,
        ticketing: Vec<f64>,
        fraud: Vec<f64>,
        alightings_ticketing: Vec<f64>,
        source: ProfileSource,
    ) -> Result<Self, ProfileError> {
        let n = stations.len();
        if n < 2 {
            return Err(ProfileError::TooShort);
        }
        if ticketing.len() != n || fraud.len() != n || alightings_ticketing.len() != n {
            return Err(ProfileError::LengthMismatch);
        }
        let total: Vec<f64> = ticketing.iter().zip(&fraud).map(|(t, f)| t + f).collect();
        for (i, ((t, f), o)) in ticketing.iter().zip(&fraud).zip(&total).enumerate() {
            if !(t.is_finite() && f.is_finite()) || *t < 0.0 || *f < 0.0 {
                return Err(ProfileError::InvalidEntry { seq: i + 1 });
            }
            debug_assert!(*o >= 0.0);
        }
        if total[n - 1] != 0.0 || ticketing[n - 1] != 0.0 {
            return Err(ProfileError::NotEmptyAtEnd);
        }
        Ok(Self {
            course,
            stations,
            ticketing,
            fraud,
            total,
            alightings_ticketing,
            source,
        })
    }

    pub fn course_id(&self) -> &CourseId {
        &self.course.course_id
    }

    pub fn len(&self) -> usize {
        self.stations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stations.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key() -> CourseKey {
        CourseKey {
            course_id: "c1".into(),
            line_id: "L1".into(),
            direction: Direction::Outbound,
            service_date: NaiveDate::from_ymd_opt(2024, 3, 6).unwrap(),
            start_time: 8 * 3600 + 20 * 60,
        }
    }

    #[test]
    fn station_coordinates_are_bounded() {
        assert!(Station::new("s".into(), "S", 181.0, 0.0).is_err());
        assert!(Station::new("s".into(), "S", 0.0, -91.0).is_err());
        assert!(Station::new("s".into(), "S", -180.0, 90.0).is_ok());
    }

    #[test]
    fn course_key_context_features() {
        let k = key();
        assert_eq!(k.day_of_week(), 2);
        assert_eq!(k.quarter_hour(), 33);
    }

    #[test]
    fn profile_total_is_sum() {
        let p = OccupancyProfile::new(
            key(),
            vec!["a".into(), "b".into(), "c".into()],
            vec![10.0, 20.0, 0.0],
            vec![1.5, 2.0, 0.0],
            vec![0.0, 0.0, 20.0],
            ProfileSource::UnifiedMeanRate,
        )
        .unwrap();
        assert_eq!(p.total, vec![11.5, 22.0, 0.0]);
    }

    #[test]
    fn profile_rejects_negative_and_nonempty_end() {
        let st = vec!["a".into(), "b".into()];
        let neg = OccupancyProfile::new(
            key(),
            st.clone(),
            vec![1.0, 0.0],
            vec![-0.5, 0.0],
            vec![0.0, 1.0],
            ProfileSource::Baseline,
        );
        assert_eq!(neg.unwrap_err(), ProfileError::InvalidEntry { seq: 1 });
        let end = OccupancyProfile::new(
            key(),
            st,
            vec![1.0, 1.0],
            vec![0.0, 0.0],
            vec![0.0, 0.0],
            ProfileSource::Baseline,
        );
        assert_eq!(end.unwrap_err(), ProfileError::NotEmptyAtEnd);
    }

    #[test]
    fn direction_parses() {
        assert_eq!("Inbound".parse::<Direction>().unwrap(), Direction::Inbound);
        assert!("sideways".parse::<Direction>().is_err());
    }
}
