//! Road network and route geometry.
//!
//! A [`RoadNetwork`] is a flat list of polyline segments with unique ids.
//! A [`Route`] is an ordered traversal of some of those segments, each either
//! forward or reversed, with cumulative arc offsets along the whole path.
//! Mapped (snapped) points carry their position as a route arc length when
//! they fall on the route, or as a segment-local offset otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{euclidean_distance, project_onto_segment, PlanarPoint};

pub type SegmentId = u64;

/// Maximum gap, in meters, tolerated between consecutive route segments.
const CONNECTIVITY_TOL: f64 = 1e-6;

/// One road segment: an id plus a polyline of at least two distinct vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    id: SegmentId,
    polyline: Vec<PlanarPoint>,
    /// Cumulative arc length at each vertex; `cum[0] == 0`.
    cum: Vec<f64>,
}

impl Segment {
    pub fn new(id: SegmentId, polyline: Vec<PlanarPoint>) -> Result<Self> {
        if polyline.len() < 2 {
            return Err(Error::InvalidNetwork(format!(
                "segment {id}: polyline needs at least 2 points"
            )));
        }
        for (k, p) in polyline.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::InvalidNetwork(format!(
                    "segment {id}: vertex {k} is not finite"
                )));
            }
        }
        let mut cum = Vec::with_capacity(polyline.len());
        cum.push(0.0);
        for k in 1..polyline.len() {
            let piece = euclidean_distance(polyline[k - 1], polyline[k]);
            if piece == 0.0 {
                return Err(Error::InvalidNetwork(format!(
                    "segment {id}: vertices {} and {k} coincide",
                    k - 1
                )));
            }
            cum.push(cum[k - 1] + piece);
        }
        Ok(Segment { id, polyline, cum })
    }

    pub fn id(&self) -> SegmentId {
        self.id
    }

    pub fn polyline(&self) -> &[PlanarPoint] {
        &self.polyline
    }

    pub fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    pub fn start(&self) -> PlanarPoint {
        self.polyline[0]
    }

    pub fn end(&self) -> PlanarPoint {
        *self.polyline.last().unwrap()
    }

    /// Nearest point on this segment to `p`:
    /// `(distance_squared, offset_from_start, foot)`.
    ///
    /// Among equidistant feet within the polyline the smallest offset wins.
    pub fn project(&self, p: PlanarPoint) -> (f64, f64, PlanarPoint) {
        let mut best: Option<(f64, f64, PlanarPoint)> = None;
        for k in 1..self.polyline.len() {
            let (d2, off, foot) = project_onto_segment(p, self.polyline[k - 1], self.polyline[k]);
            let off = self.cum[k - 1] + off;
            let better = match &best {
                None => true,
                Some((bd2, boff, _)) => d2 < *bd2 || (d2 == *bd2 && off < *boff),
            };
            if better {
                best = Some((d2, off, foot));
            }
        }
        best.unwrap()
    }

    /// Point at `offset` meters from the segment start, clamped to the ends.
    pub fn point_at_offset(&self, offset: f64) -> PlanarPoint {
        let len = self.length();
        let offset = offset.clamp(0.0, len);
        // Piece k spans cum[k] ..= cum[k+1].
        let k = self
            .cum
            .partition_point(|&c| c <= offset)
            .saturating_sub(1)
            .min(self.polyline.len() - 2);
        let a = self.polyline[k];
        let b = self.polyline[k + 1];
        let piece = self.cum[k + 1] - self.cum[k];
        let rem = offset - self.cum[k];
        let ex = (b.x - a.x) / piece;
        let ey = (b.y - a.y) / piece;
        PlanarPoint::new(a.x + ex * rem, a.y + ey * rem)
    }
}

/// An immutable set of segments with unique ids, ordered by id.
#[derive(Debug, Clone)]
pub struct RoadNetwork {
    segments: Vec<Segment>,
}

impl RoadNetwork {
    pub fn new(mut segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::EmptyNetwork);
        }
        segments.sort_by_key(|s| s.id);
        if let Some(w) = segments.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::InvalidNetwork(format!("duplicate segment id {}", w[0].id)));
        }
        Ok(RoadNetwork { segments })
    }

    /// Segments in ascending id order.
    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, id: SegmentId) -> Option<&Segment> {
        self.segments
            .binary_search_by_key(&id, |s| s.id)
            .ok()
            .map(|i| &self.segments[i])
    }
}

/// One step of a route: a segment traversed forward or against its polyline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteStep {
    pub segment: SegmentId,
    #[serde(default)]
    pub reversed: bool,
}

/// An ordered, connected traversal of network segments.
///
/// The route owns copies of its segments so that arc positions and points
/// along the path can be computed without going back to the network.
#[derive(Debug, Clone)]
pub struct Route {
    steps: Vec<RouteStep>,
    segments: Vec<Segment>,
    /// `offsets[i]` is the arc length at the start of step i;
    /// `offsets[steps.len()]` is the total length.
    offsets: Vec<f64>,
}

impl Route {
    pub fn new(network: &RoadNetwork, steps: Vec<RouteStep>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::InvalidRoute("route has no segments".into()));
        }
        let mut segments = Vec::with_capacity(steps.len());
        for step in &steps {
            let seg = network.segment(step.segment).ok_or_else(|| {
                Error::InvalidRoute(format!("segment {} not in network", step.segment))
            })?;
            segments.push(seg.clone());
        }
        for i in 0..steps.len() {
            if steps[i + 1..].iter().any(|s| s.segment == steps[i].segment) {
                return Err(Error::InvalidRoute(format!(
                    "segment {} appears more than once",
                    steps[i].segment
                )));
            }
        }
        for i in 1..steps.len() {
            let prev_end = traversal_end(&segments[i - 1], steps[i - 1].reversed);
            let cur_start = traversal_start(&segments[i], steps[i].reversed);
            if euclidean_distance(prev_end, cur_start) > CONNECTIVITY_TOL {
                return Err(Error::InvalidRoute(format!(
                    "segments {} and {} do not share an endpoint",
                    steps[i - 1].segment,
                    steps[i].segment
                )));
            }
        }
        let mut offsets = Vec::with_capacity(steps.len() + 1);
        offsets.push(0.0);
        for seg in &segments {
            offsets.push(offsets.last().unwrap() + seg.length());
        }
        if *offsets.last().unwrap() <= 0.0 {
            return Err(Error::InvalidRoute("route has zero length".into()));
        }
        Ok(Route {
            steps,
            segments,
            offsets,
        })
    }

    pub fn steps(&self) -> &[RouteStep] {
        &self.steps
    }

    /// Total route length `d` in meters.
    pub fn total_length(&self) -> f64 {
        *self.offsets.last().unwrap()
    }

    pub fn contains(&self, segment: SegmentId) -> bool {
        self.step_index(segment).is_some()
    }

    fn step_index(&self, segment: SegmentId) -> Option<usize> {
        self.steps.iter().position(|s| s.segment == segment)
    }

    /// Route arc length of a point on `segment` at `local_offset` meters from
    /// the segment's own start, or `None` if the segment is not on the route.
    pub fn arc_position(&self, segment: SegmentId, local_offset: f64) -> Option<f64> {
        let i = self.step_index(segment)?;
        let seg = &self.segments[i];
        let along = if self.steps[i].reversed {
            seg.length() - local_offset
        } else {
            local_offset
        };
        Some(self.offsets[i] + along.clamp(0.0, seg.length()))
    }

    /// Point on the route at arc length `s`, clamped to `[0, d]`.
    pub fn point_at_arc(&self, s: f64) -> PlanarPoint {
        let s = s.clamp(0.0, self.total_length());
        let i = self
            .offsets
            .partition_point(|&o| o <= s)
            .saturating_sub(1)
            .min(self.steps.len() - 1);
        let local = s - self.offsets[i];
        let seg = &self.segments[i];
        let offset = if self.steps[i].reversed {
            seg.length() - local
        } else {
            local
        };
        seg.point_at_offset(offset)
    }
}

fn traversal_start(seg: &Segment, reversed: bool) -> PlanarPoint {
    if reversed {
        seg.end()
    } else {
        seg.start()
    }
}

fn traversal_end(seg: &Segment, reversed: bool) -> PlanarPoint {
    if reversed {
        seg.start()
    } else {
        seg.end()
    }
}

/// A GPS record projected onto the network.
///
/// `arc_position` is the route arc length when `on_route` is set, otherwise
/// the offset from the snapped segment's own start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MappedPoint {
    pub segment: SegmentId,
    pub arc_position: f64,
    pub snapped: PlanarPoint,
    pub on_route: bool,
}

/// A mapped point that kept its source timestamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MappedRecord {
    pub timestamp: f64,
    pub point: MappedPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappedTrajectory {
    pub id: String,
    pub records: Vec<MappedRecord>,
}

/// Arc length from the route start to an on-route mapped point.
///
/// Off-route points are a contract violation on the caller's side; they are
/// reported as an error rather than a panic so pipelines can name the culprit.
pub fn route_arc_position(route: &Route, m: &MappedPoint) -> Result<f64> {
    if !m.on_route || !route.contains(m.segment) {
        return Err(Error::OffRoute { segment: m.segment });
    }
    debug_assert!(m.arc_position >= 0.0 && m.arc_position <= route.total_length());
    Ok(m.arc_position)
}
