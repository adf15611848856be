//! Trajectory data model: timestamped GPS records grouped per traveler.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::PlanarPoint;

/// One GPS fix: planar location plus a timestamp in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsRecord {
    pub point: PlanarPoint,
    pub timestamp: f64,
}

impl GpsRecord {
    pub fn new(point: PlanarPoint, timestamp: f64) -> Self {
        GpsRecord { point, timestamp }
    }
}

/// An ordered sequence of records for one trip.
///
/// Construction enforces the representation invariants: at least one record,
/// finite coordinates, finite non-negative timestamps, and strictly
/// increasing timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: String,
    pub records: Vec<GpsRecord>,
}

impl Trajectory {
    pub fn new(id: impl Into<String>, records: Vec<GpsRecord>) -> Result<Self> {
        let id = id.into();
        if records.is_empty() {
            return Err(Error::BadTrajectory {
                id,
                reason: "no records".into(),
            });
        }
        for (j, r) in records.iter().enumerate() {
            if !r.point.is_finite() {
                return Err(Error::BadTrajectory {
                    id,
                    reason: format!("record {j} has non-finite coordinates"),
                });
            }
            if !r.timestamp.is_finite() || r.timestamp < 0.0 {
                return Err(Error::BadTrajectory {
                    id,
                    reason: format!("record {j} has invalid timestamp {}", r.timestamp),
                });
            }
        }
        if let Some(j) = (1..records.len()).find(|&j| records[j].timestamp <= records[j - 1].timestamp)
        {
            return Err(Error::BadTrajectory {
                id,
                reason: format!(
                    "timestamps not strictly increasing at record {j} ({} after {})",
                    records[j].timestamp,
                    records[j - 1].timestamp
                ),
            });
        }
        Ok(Trajectory { id, records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}
