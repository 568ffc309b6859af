//! Load-profile arithmetic: occupancy between consecutive stops from
//! boardings and alightings.

use crate::model::{StopEvent, StationId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FlowError {
    #[error("boardings ({boardings}) and alightings ({alightings}) differ in length")]
    LengthMismatch { boardings: usize, alightings: usize },
    #[error("a course needs at least two stops, got {0}")]
    TooFewStops(usize),
    #[error("occupancy becomes negative after seq {seq}")]
    NegativeOccupancy { seq: usize },
    #[error("stop {seq} ({station}) carries no counting-cell measure")]
    MissingApc { seq: usize, station: StationId },
    #[error("stop {seq} measure has neither occupancy nor both flows")]
    IncompleteApc { seq: usize },
}

/// Occupancy after each stop: `O[i] = sum_{j <= i} (Y[j] - Z[j])`.
///
/// Flows need not balance; a non-zero final entry is left to the caller
/// to judge. Any negative running total is an error.
pub fn occupancy_from_flows(boardings: &[u32], alightings: &[u32]) -> Result<Vec<u32>, FlowError> {
    if boardings.len() != alightings.len() {
        return Err(FlowError::LengthMismatch {
            boardings: boardings.len(),
            alightings: alightings.len(),
        });
    }
    if boardings.len() < 2 {
        return Err(FlowError::TooFewStops(boardings.len()));
    }
    let mut load: i64 = 0;
    boardings
        .iter()
        .zip(alightings)
        .enumerate()
        .map(|(i, (&y, &z))| {
            load += i64::from(y) - i64::from(z);
            u32::try_from(load).map_err(|_| FlowError::NegativeOccupancy { seq: i + 1 })
        })
        .collect()
}

/// Inverse of [`occupancy_from_flows`]: net flow `Y[i] - Z[i]` at each stop.
pub fn net_flows(occupancy: &[u32]) -> Vec<i64> {
    let mut prev = 0i64;
    occupancy
        .iter()
        .map(|&o| {
            let d = i64::from(o) - prev;
            prev = i64::from(o);
            d
        })
        .collect()
}

/// A measured occupancy that disagrees with the occupancy implied by the
/// measured flows at the same stop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ApcDiscrepancy {
    pub seq: usize,
    pub measured: u32,
    pub from_flows: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApcOccupancy {
    pub occupancy: Vec<u32>,
    pub discrepancies: Vec<ApcDiscrepancy>,
}

/// Counting-cell occupancy of a course.
///
/// A measured `occupancy_after` always takes precedence. Where it is
/// missing, the load is derived from flows: from the full prefix sum when
/// every stop carries flows, otherwise by stepping from the previous
/// resolved load.
pub fn apc_occupancy(stops: &[StopEvent]) -> Result<ApcOccupancy, FlowError> {
    let measures = stops
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.apc.ok_or_else(|| FlowError::MissingApc {
                seq: i + 1,
                station: s.station_id.clone(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    if measures.len() < 2 {
        return Err(FlowError::TooFewStops(measures.len()));
    }

    let from_flows = if measures.iter().all(|m| m.has_flows()) {
        let y: Vec<u32> = measures.iter().map(|m| m.boardings.unwrap_or(0)).collect();
        let z: Vec<u32> = measures.iter().map(|m| m.alightings.unwrap_or(0)).collect();
        match occupancy_from_flows(&y, &z) {
            Ok(o) => Some(o),
            // measured occupancies may still cover every stop
            Err(FlowError::NegativeOccupancy { .. })
                if measures.iter().all(|m| m.occupancy_after.is_some()) =>
            {
                None
            }
            Err(e) => return Err(e),
        }
    } else {
        None
    };

    let mut occupancy = Vec::with_capacity(measures.len());
    let mut discrepancies = Vec::new();
    let mut prev: i64 = 0;
    for (i, m) in measures.iter().enumerate() {
        let derived = from_flows.as_ref().map(|o| o[i]);
        let value = match (m.occupancy_after, derived) {
            (Some(measured), Some(d)) => {
                if measured != d {
                    discrepancies.push(ApcDiscrepancy {
                        seq: i + 1,
                        measured,
                        from_flows: d,
                    });
                }
                measured
            }
            (Some(measured), None) => measured,
            (None, Some(d)) => d,
            (None, None) => {
                let (Some(y), Some(z)) = (m.boardings, m.alightings) else {
                    return Err(FlowError::IncompleteApc { seq: i + 1 });
                };
                let next = prev + i64::from(y) - i64::from(z);
                u32::try_from(next).map_err(|_| FlowError::NegativeOccupancy { seq: i + 1 })?
            }
        };
        prev = i64::from(value);
        occupancy.push(value);
    }
    Ok(ApcOccupancy {
        occupancy,
        discrepancies,
    })
}
