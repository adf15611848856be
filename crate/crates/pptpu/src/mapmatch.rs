//! Map matching: project GPS records onto the road network.
//!
//! Each point is snapped independently to the globally nearest segment
//! (perpendicular projection, clamped to segment ends) with deterministic
//! tie-breaking: lowest segment id first, then smallest offset along the
//! segment. There is no snap radius and no temporal smoothing; a record
//! counts as on-route only if its snapped segment belongs to the route.
//!
//! Sanitized points can land anywhere, so apparent backward motion along the
//! route is kept as is, as a signed distance, rather than corrected.

use rayon::prelude::*;

use crate::error::Result;
use crate::geom::PlanarPoint;
use crate::model::Trajectory;
use crate::network::{
    route_arc_position, MappedPoint, MappedRecord, MappedTrajectory, RoadNetwork, Route, SegmentId,
};

/// Snap a point to the nearest segment of the network by exhaustive search.
///
/// Networks are non-empty by construction, so snapping always succeeds. The
/// result's `arc_position` is the offset from the segment's own start and
/// `on_route` is false; use a [`Matcher`] with a route to resolve both.
pub fn snap_point(network: &RoadNetwork, p: PlanarPoint) -> MappedPoint {
    let (_, id, offset, snapped) = brute_force(network, p);
    MappedPoint {
        segment: id,
        arc_position: offset,
        snapped,
        on_route: false,
    }
}

/// Signed travel distance along the route between two consecutive mapped
/// points: arc(cur) − arc(prev). Positive with the route direction, negative
/// against it, zero when the mapped locations coincide.
pub fn signed_route_distance(
    route: &Route,
    prev: &MappedPoint,
    cur: &MappedPoint,
) -> Result<f64> {
    Ok(route_arc_position(route, cur)? - route_arc_position(route, prev)?)
}

fn brute_force(network: &RoadNetwork, p: PlanarPoint) -> (f64, SegmentId, f64, PlanarPoint) {
    // Segments are stored in ascending id order, so keeping the first strict
    // improvement realizes the lowest-id tie-break.
    let mut best: Option<(f64, SegmentId, f64, PlanarPoint)> = None;
    for seg in network.segments() {
        let (d2, off, foot) = seg.project(p);
        if best.map_or(true, |(bd2, _, _, _)| d2 < bd2) {
            best = Some((d2, seg.id(), off, foot));
        }
    }
    best.expect("network is never empty")
}

/// Snaps points against a fixed network, optionally resolving route
/// membership and route arc positions.
///
/// A uniform grid over segment bounding boxes accelerates nearest-segment
/// queries; the grid is immutable after construction, so a matcher can be
/// shared across threads.
pub struct Matcher<'n> {
    network: &'n RoadNetwork,
    route: Option<&'n Route>,
    grid: Grid,
}

impl<'n> Matcher<'n> {
    pub fn new(network: &'n RoadNetwork) -> Self {
        Matcher {
            network,
            route: None,
            grid: Grid::build(network),
        }
    }

    pub fn with_route(network: &'n RoadNetwork, route: &'n Route) -> Self {
        Matcher {
            route: Some(route),
            ..Matcher::new(network)
        }
    }

    /// Snap one point, resolving `on_route` and the arc position against the
    /// matcher's route when one was supplied.
    pub fn snap(&self, p: PlanarPoint) -> MappedPoint {
        let (_, id, offset, snapped) = self
            .grid
            .query(self.network, p)
            .unwrap_or_else(|| brute_force(self.network, p));
        let on_route_arc = self.route.and_then(|r| r.arc_position(id, offset));
        MappedPoint {
            segment: id,
            arc_position: on_route_arc.unwrap_or(offset),
            snapped,
            on_route: on_route_arc.is_some(),
        }
    }

    /// Snap every record of a trajectory, preserving order and timestamps.
    pub fn map_trajectory(&self, t: &Trajectory) -> MappedTrajectory {
        MappedTrajectory {
            id: t.id.clone(),
            records: t
                .records
                .iter()
                .map(|r| MappedRecord {
                    timestamp: r.timestamp,
                    point: self.snap(r.point),
                })
                .collect(),
        }
    }

    /// Map a whole dataset in parallel, preserving trajectory order.
    pub fn map_dataset(&self, trajectories: &[Trajectory]) -> Vec<MappedTrajectory> {
        trajectories
            .par_iter()
            .map(|t| self.map_trajectory(t))
            .collect()
    }
}

/// Uniform grid of segment indices keyed by covered cells.
struct Grid {
    min_x: f64,
    min_y: f64,
    cell: f64,
    nx: i64,
    ny: i64,
    cells: Vec<Vec<u32>>,
}

impl Grid {
    fn build(network: &RoadNetwork) -> Self {
        let mut min_x = f64::INFINITY;
        let mut min_y = f64::INFINITY;
        let mut max_x = f64::NEG_INFINITY;
        let mut max_y = f64::NEG_INFINITY;
        for seg in network.segments() {
            for p in seg.polyline() {
                min_x = min_x.min(p.x);
                min_y = min_y.min(p.y);
                max_x = max_x.max(p.x);
                max_y = max_y.max(p.y);
            }
        }
        let extent = (max_x - min_x).max(max_y - min_y).max(1.0);
        let cell = (extent / 64.0).max(1.0);
        let nx = (((max_x - min_x) / cell).floor() as i64 + 1).max(1);
        let ny = (((max_y - min_y) / cell).floor() as i64 + 1).max(1);
        let mut cells = vec![Vec::new(); (nx * ny) as usize];
        for (idx, seg) in network.segments().iter().enumerate() {
            let pts = seg.polyline();
            for piece in pts.windows(2) {
                let x0 = ((piece[0].x.min(piece[1].x) - min_x) / cell) as i64;
                let x1 = ((piece[0].x.max(piece[1].x) - min_x) / cell) as i64;
                let y0 = ((piece[0].y.min(piece[1].y) - min_y) / cell) as i64;
                let y1 = ((piece[0].y.max(piece[1].y) - min_y) / cell) as i64;
                for cx in x0..=x1.min(nx - 1) {
                    for cy in y0..=y1.min(ny - 1) {
                        let slot = &mut cells[(cx * ny + cy) as usize];
                        if slot.last() != Some(&(idx as u32)) {
                            slot.push(idx as u32);
                        }
                    }
                }
            }
        }
        Grid {
            min_x,
            min_y,
            cell,
            nx,
            ny,
            cells,
        }
    }

    /// Nearest segment via expanding rings of cells. Returns `None` when the
    /// query point is too far outside the grid to be worth walking rings.
    fn query(
        &self,
        network: &RoadNetwork,
        p: PlanarPoint,
    ) -> Option<(f64, SegmentId, f64, PlanarPoint)> {
        let cx = ((p.x - self.min_x) / self.cell).floor() as i64;
        let cy = ((p.y - self.min_y) / self.cell).floor() as i64;
        if cx < -2 || cx > self.nx + 1 || cy < -2 || cy > self.ny + 1 {
            return None;
        }
        let k_max = cx
            .abs()
            .max((self.nx - 1 - cx).abs())
            .max(cy.abs())
            .max((self.ny - 1 - cy).abs());
        let mut best: Option<(f64, SegmentId, f64, PlanarPoint)> = None;
        for k in 0..=k_max {
            // Everything in ring k or beyond is at least (k-1) cells away, so
            // once that exceeds the best distance no later ring can win a tie.
            if let Some((bd2, _, _, _)) = best {
                let reach = (k - 1) as f64 * self.cell;
                if k >= 1 && reach * reach > bd2 {
                    break;
                }
            }
            self.visit_ring(cx, cy, k, |cell_idx| {
                for &seg_idx in &self.cells[cell_idx] {
                    let seg = &network.segments()[seg_idx as usize];
                    let (d2, off, foot) = seg.project(p);
                    let key = (d2, seg.id(), off);
                    if best.map_or(true, |(bd2, bid, boff, _)| key < (bd2, bid, boff)) {
                        best = Some((d2, seg.id(), off, foot));
                    }
                }
            });
        }
        best
    }

    fn visit_ring(&self, cx: i64, cy: i64, k: i64, mut f: impl FnMut(usize)) {
        let mut visit = |x: i64, y: i64| {
            if x >= 0 && x < self.nx && y >= 0 && y < self.ny {
                f((x * self.ny + y) as usize);
            }
        };
        if k == 0 {
            visit(cx, cy);
            return;
        }
        for x in cx - k..=cx + k {
            visit(x, cy - k);
            visit(x, cy + k);
        }
        for y in cy - k + 1..=cy + k - 1 {
            visit(cx - k, y);
            visit(cx + k, y);
        }
    }
}
