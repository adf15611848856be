//! Planar geometry primitives: points, distances, the equirectangular
//! projection used at ingestion, and point-to-segment projection.
//!
//! Everything downstream works in a local planar frame measured in meters.
//! Latitude/longitude input is converted exactly once, about a per-dataset
//! origin; at metro scales the projection error is far below the noise the
//! sanitizer injects.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius in meters, used by the equirectangular projection.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// A location in the local planar frame: `x` meters east, `y` meters north.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarPoint {
    pub x: f64,
    pub y: f64,
}

impl PlanarPoint {
    pub fn new(x: f64, y: f64) -> Self {
        PlanarPoint { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Euclidean distance between two planar points.
pub fn euclidean_distance(a: PlanarPoint, b: PlanarPoint) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    (dx * dx + dy * dy).sqrt()
}

/// Project geographic coordinates into the planar frame with an
/// equirectangular projection about `origin` (lat, lon in degrees):
///
/// ```text
/// x = (lon - lon0) * cos(lat0) * R * pi/180
/// y = (lat - lat0) * R * pi/180
/// ```
pub fn project_latlon(lat: f64, lon: f64, origin: (f64, f64)) -> Result<PlanarPoint> {
    check_latlon(lat, lon)?;
    check_latlon(origin.0, origin.1)?;
    let scale = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
    let x = (lon - origin.1) * origin.0.to_radians().cos() * scale;
    let y = (lat - origin.0) * scale;
    Ok(PlanarPoint::new(x, y))
}

/// Inverse of [`project_latlon`]; returns (lat, lon) in degrees.
pub fn inverse_project_latlon(p: PlanarPoint, origin: (f64, f64)) -> (f64, f64) {
    let scale = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
    let lat = origin.0 + p.y / scale;
    let lon = origin.1 + p.x / (origin.0.to_radians().cos() * scale);
    (lat, lon)
}

fn check_latlon(lat: f64, lon: f64) -> Result<()> {
    if !lat.is_finite() || !lon.is_finite() || lat.abs() > 90.0 || lon.abs() > 180.0 {
        return Err(Error::CoordinateOutOfRange { lat, lon });
    }
    Ok(())
}

/// Orthogonal projection of `p` onto the segment from `a` to `b`.
///
/// Returns `(distance_squared, offset, foot)` where `offset` is the distance
/// from `a` to the foot along the segment, clamped to `[0, |b - a|]`.
///
/// The projection is computed against the unit direction vector rather than
/// the normalized parameter `t`; a point lying exactly on an axis-aligned
/// segment then projects onto itself bit-for-bit, which the zero-noise
/// pipeline identity relies on.
pub fn project_onto_segment(p: PlanarPoint, a: PlanarPoint, b: PlanarPoint) -> (f64, f64, PlanarPoint) {
    let ux = b.x - a.x;
    let uy = b.y - a.y;
    let len = (ux * ux + uy * uy).sqrt();
    if len == 0.0 {
        // Degenerate piece; callers reject these at construction, but stay safe.
        let d2 = (p.x - a.x).powi(2) + (p.y - a.y).powi(2);
        return (d2, 0.0, a);
    }
    let ex = ux / len;
    let ey = uy / len;
    let offset = ((p.x - a.x) * ex + (p.y - a.y) * ey).clamp(0.0, len);
    let foot = PlanarPoint::new(a.x + ex * offset, a.y + ey * offset);
    let d2 = (p.x - foot.x).powi(2) + (p.y - foot.y).powi(2);
    (d2, offset, foot)
}
