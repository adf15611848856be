//! Synthetic road networks and GPS trace generation.
//!
//! Regenerates the two simulation setups: a single straight road, and three
//! parallel roads of which road 1 is the target route. Trip speeds follow an
//! inverse Weibull (Frechet) distribution fitted to a target mean and
//! variance; each trip emits `n` records at a fixed sampling period `tau`
//! starting from the route start. The paper-style defaults are a 4800 m road,
//! 100 m spacing, mean speed 24 m/s with variance 8, tau = 20 s, n = 10.
//!
//! Also provides the record subsampling rules used when ingesting real
//! traces: equal-spaced or random selection down to `n_max` records.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::{GpsRecord, Trajectory};
use crate::network::{RoadNetwork, Route, RouteStep, Segment};
use crate::rng;

fn gamma_fn(x: f64) -> f64 {
    ln_gamma(x).exp()
}

/// Trip speed distribution: Frechet with CDF exp(-(x/s)^{-k}).
///
/// The shape must exceed 2 so the variance is finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedModel {
    pub shape: f64,
    pub scale: f64,
    pub mean: f64,
    pub variance: f64,
}

/// Fit Frechet parameters to a target mean and variance. Returns (shape,
/// scale); see [`SpeedModel::fit`].
pub fn fit_inverse_weibull(mean: f64, variance: f64) -> Result<(f64, f64)> {
    SpeedModel::fit(mean, variance).map(|m| (m.shape, m.scale))
}

impl SpeedModel {
    /// Solve mean = s Gamma(1 - 1/k) and variance = s^2 (Gamma(1 - 2/k) -
    /// Gamma^2(1 - 1/k)) for (k, s).
    ///
    /// The squared coefficient of variation Gamma(1-2/k)/Gamma^2(1-1/k) - 1
    /// decreases monotonically in k, so k comes from bisection and s follows
    /// in closed form.
    pub fn fit(mean: f64, variance: f64) -> Result<Self> {
        if !(mean.is_finite() && mean > 0.0) {
            return Err(Error::InvalidParameter(format!("mean speed {mean} must be positive")));
        }
        if !(variance.is_finite() && variance > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "speed variance {variance} must be positive"
            )));
        }
        let target = variance / (mean * mean);
        let cv2 = |k: f64| (ln_gamma(1.0 - 2.0 / k) - 2.0 * ln_gamma(1.0 - 1.0 / k)).exp() - 1.0;
        let mut lo = 2.0 + 1e-9;
        if cv2(lo) < target {
            return Err(Error::InvalidParameter(format!(
                "no Frechet shape > 2 gives coefficient of variation^2 = {target}"
            )));
        }
        let mut hi = 4.0;
        while cv2(hi) > target {
            hi *= 2.0;
            if hi > 1e12 {
                return Err(Error::InvalidParameter(format!(
                    "variance {variance} too small to fit relative to mean {mean}"
                )));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cv2(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let shape = 0.5 * (lo + hi);
        let scale = mean / gamma_fn(1.0 - 1.0 / shape);
        let model = SpeedModel {
            shape,
            scale,
            mean,
            variance,
        };
        let (m, v) = model.moments();
        if (m - mean).abs() > 1e-6 * mean || (v - variance).abs() > 1e-6 * variance {
            return Err(Error::InvalidParameter(format!(
                "Frechet fit did not converge for mean {mean}, variance {variance}"
            )));
        }
        Ok(model)
    }

    /// Analytic mean and variance of the fitted distribution.
    pub fn moments(&self) -> (f64, f64) {
        let g1 = gamma_fn(1.0 - 1.0 / self.shape);
        let g2 = gamma_fn(1.0 - 2.0 / self.shape);
        (self.scale * g1, self.scale * self.scale * (g2 - g1 * g1))
    }

    /// CDF exp(-(x/s)^{-k}) for x > 0.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        (-(x / self.scale).powf(-self.shape)).exp()
    }

    /// Inverse-CDF sample: x = s (-ln u)^{-1/k} with u uniform in (0, 1).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut u: f64 = rng.random();
        while u == 0.0 {
            u = rng.random();
        }
        self.scale * (-u.ln()).powf(-1.0 / self.shape)
    }
}

/// Simulated topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetworkKind {
    /// One straight road; the whole road is the route.
    SingleRoad,
    /// Three parallel roads; road 1 (the lowest) is the route.
    ThreeParallelRoads,
}

/// Default road length, meters: covers a 10-record trip at 20 s spacing and
/// a bit over 24 m/s.
pub const DEFAULT_ROAD_LENGTH: f64 = 4800.0;
/// Default spacing between parallel roads, meters.
pub const DEFAULT_ROAD_SPACING: f64 = 100.0;

/// Build the synthetic network and its target route. Roads run horizontally
/// from x = 0; parallel roads sit at y = 0, spacing, 2 * spacing with ids
/// 1, 2, 3, and the route is road 1.
pub fn make_network(kind: NetworkKind, length: f64, spacing: f64) -> Result<(RoadNetwork, Route)> {
    if !(length.is_finite() && length > 0.0) {
        return Err(Error::InvalidParameter(format!("road length {length} must be positive")));
    }
    let road = |id: u64, y: f64| {
        Segment::new(
            id,
            vec![
                crate::geom::PlanarPoint::new(0.0, y),
                crate::geom::PlanarPoint::new(length, y),
            ],
        )
    };
    let segments = match kind {
        NetworkKind::SingleRoad => vec![road(1, 0.0)?],
        NetworkKind::ThreeParallelRoads => {
            if !(spacing.is_finite() && spacing > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "road spacing {spacing} must be positive"
                )));
            }
            vec![road(1, 0.0)?, road(2, spacing)?, road(3, 2.0 * spacing)?]
        }
    };
    let network = RoadNetwork::new(segments)?;
    let route = Route::new(
        &network,
        vec![RouteStep {
            segment: 1,
            reversed: false,
        }],
    )?;
    Ok((network, route))
}

/// One trip along the route at constant `speed`: records at arc positions
/// speed * tau * j with timestamps tau * j, for j = 0..n. Positions past the
/// route end are clamped there; the second return value counts them.
pub fn generate_trajectory(
    id: impl Into<String>,
    route: &Route,
    speed: f64,
    tau: f64,
    n: usize,
) -> Result<(Trajectory, usize)> {
    if !(speed.is_finite() && speed > 0.0) {
        return Err(Error::InvalidParameter(format!("speed {speed} must be positive")));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidParameter(format!("period {tau} must be positive")));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("cannot generate zero records".into()));
    }
    let d = route.total_length();
    let mut clamped = 0;
    let mut records = Vec::with_capacity(n);
    for j in 0..n {
        let t = tau * j as f64;
        let arc = speed * t;
        if arc > d {
            clamped += 1;
        }
        records.push(GpsRecord::new(route.point_at_arc(arc), t));
    }
    Ok((Trajectory::new(id, records)?, clamped))
}

/// Knobs for a simulated dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub trips: usize,
    pub tau: f64,
    pub n: usize,
    /// Fraction of trips placed on a non-route road (three-road topology).
    #[serde(default)]
    pub off_route_fraction: f64,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        SimulationSpec {
            trips: 1000,
            tau: 20.0,
            n: 10,
            off_route_fraction: 0.0,
        }
    }
}

/// A generated dataset plus the ground truth behind it.
#[derive(Debug, Clone)]
pub struct GeneratedDataset {
    pub trajectories: Vec<Trajectory>,
    /// True trip speeds, aligned with `trajectories`.
    pub speeds: Vec<f64>,
    /// Records clamped at the end of their road.
    pub clamped_records: usize,
}

/// Generate `spec.trips` trips with speeds drawn from `model`.
///
/// Each trip uses its own RNG stream keyed by `(master_seed, trip id)`; the
/// per-trip draw order is speed first, then (only when the off-route
/// fraction is positive) the placement decision and road choice. Off-route
/// trips run along a uniformly chosen non-route road with the same
/// kinematics.
pub fn generate_dataset(
    network: &RoadNetwork,
    route: &Route,
    model: &SpeedModel,
    spec: &SimulationSpec,
    master_seed: u64,
) -> Result<GeneratedDataset> {
    if spec.trips == 0 {
        return Err(Error::InvalidParameter("zero trips requested".into()));
    }
    if !(0.0..=1.0).contains(&spec.off_route_fraction) {
        return Err(Error::InvalidParameter(format!(
            "off-route fraction {} outside [0, 1]",
            spec.off_route_fraction
        )));
    }
    let off_roads: Vec<&Segment> = network
        .segments()
        .iter()
        .filter(|s| !route.contains(s.id()))
        .collect();
    if spec.off_route_fraction > 0.0 && off_roads.is_empty() {
        return Err(Error::InvalidParameter(
            "off-route trips requested but every road is on the route".into(),
        ));
    }
    let results: Vec<(Trajectory, f64, usize)> = (0..spec.trips)
        .into_par_iter()
        .map(|i| {
            let id = format!("trip-{i:05}");
            let mut stream = rng::stream(master_seed, "simulate", id.as_bytes());
            let speed = model.sample(&mut stream);
            let off_road = if spec.off_route_fraction > 0.0
                && stream.random::<f64>() < spec.off_route_fraction
            {
                Some(off_roads[stream.random_range(0..off_roads.len())])
            } else {
                None
            };
            match off_road {
                None => generate_trajectory(&id, route, speed, spec.tau, spec.n)
                    .map(|(t, c)| (t, speed, c)),
                Some(seg) => {
                    let mut clamped = 0;
                    let mut records = Vec::with_capacity(spec.n);
                    for j in 0..spec.n {
                        let t = spec.tau * j as f64;
                        let arc = speed * t;
                        if arc > seg.length() {
                            clamped += 1;
                        }
                        records.push(GpsRecord::new(seg.point_at_offset(arc), t));
                    }
                    Trajectory::new(&id, records).map(|t| (t, speed, clamped))
                }
            }
        })
        .collect::<Result<_>>()?;
    let mut trajectories = Vec::with_capacity(results.len());
    let mut speeds = Vec::with_capacity(results.len());
    let mut clamped_records = 0;
    for (t, s, c) in results {
        trajectories.push(t);
        speeds.push(s);
        clamped_records += c;
    }
    Ok(GeneratedDataset {
        trajectories,
        speeds,
        clamped_records,
    })
}

/// How to thin a trajectory down to `n_max` records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubsampleStrategy {
    EqualSpaced,
    Random,
}

/// Reduce a trajectory to at most `n_max` records.
///
/// Short trajectories pass through unchanged. Equal-spaced selection keeps
/// indices round(j (n-1) / (n_max-1)), always including the first and last
/// records; random selection keeps a uniform subset, re-sorted into
/// timestamp order.
pub fn subsample_records<R: Rng + ?Sized>(
    t: &Trajectory,
    n_max: usize,
    strategy: SubsampleStrategy,
    rng: &mut R,
) -> Result<Trajectory> {
    if n_max < 2 {
        return Err(Error::InvalidParameter(format!("n_max {n_max} must be at least 2")));
    }
    let n = t.records.len();
    if n <= n_max {
        return Ok(t.clone());
    }
    let indices: Vec<usize> = match strategy {
        SubsampleStrategy::EqualSpaced => {
            let step = (n - 1) as f64 / (n_max - 1) as f64;
            (0..n_max).map(|j| (j as f64 * step).round() as usize).collect()
        }
        SubsampleStrategy::Random => {
            let mut picked = rand::seq::index::sample(rng, n, n_max).into_vec();
            picked.sort_unstable();
            picked
        }
    };
    let records = indices.iter().map(|&j| t.records[j]).collect();
    Trajectory::new(t.id.clone(), records)
}

/// Subsample a dataset with one derived stream per trajectory.
pub fn subsample_dataset(
    trajectories: &[Trajectory],
    n_max: usize,
    strategy: SubsampleStrategy,
    master_seed: u64,
) -> Result<Vec<Trajectory>> {
    trajectories
        .par_iter()
        .map(|t| {
            let mut stream = rng::stream(master_seed, "subsample", t.id.as_bytes());
            subsample_records(t, n_max, strategy, &mut stream)
        })
        .collect()
}
