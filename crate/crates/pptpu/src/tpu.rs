//! Travel-time prediction and uncertainty from mapped trajectories.
//!
//! For each trajectory the engine accumulates the signed route distance
//! `d_star` and elapsed time `delta_t` over consecutive record pairs whose
//! endpoints both fall on the route. A trajectory is usable when at least one
//! such pair exists and `d_star >= 0`. Usable trajectories yield a speed
//! `s_star = d_star / delta_t`, a predicted full-route travel time
//! `t_star = d / s_star`, and a coverage weight `w = d_star / d` clamped to
//! [0, 1]. The effective trajectory count is `K_eff = sum of w` and satisfies
//! `K_eff <= |U| <= K`.
//!
//! Query answers come from empirical CDFs of the predicted times, either
//! unweighted or rebuilt by weighted resampling (round(K_eff) draws with
//! replacement, probabilities proportional to w).

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mapmatch::signed_route_distance;
use crate::network::{MappedTrajectory, Route};

/// Why a trajectory did or did not enter the usable set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Usability {
    Usable,
    /// No consecutive record pair with both endpoints on the route.
    NoPair,
    /// Net on-route movement opposes the route direction (d_star < 0).
    Backward,
    /// Positive distance over zero elapsed time; speed is undefined.
    DegenerateSpeed,
}

/// Algorithm outputs for one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEvaluation {
    pub id: String,
    /// Signed on-route distance sum, meters.
    pub d_star: f64,
    /// Elapsed time over the qualifying pairs only, seconds.
    pub delta_t: f64,
    pub usability: Usability,
    /// Estimated speed s_star, m/s; present only when d_star and delta_t are
    /// both positive.
    pub speed: Option<f64>,
    /// Predicted full-route travel time t_star, seconds.
    pub predicted_time: Option<f64>,
    /// Route coverage weight in [0, 1]; zero for unusable trajectories.
    pub weight: f64,
}

impl TrajectoryEvaluation {
    pub fn is_usable(&self) -> bool {
        self.usability == Usability::Usable
    }
}

/// Evaluate one mapped trajectory against the route.
///
/// Records must be in timestamp order. Fewer than two records is not an
/// error; the trajectory simply has no qualifying pair.
pub fn evaluate_trajectory(
    route: &Route,
    mapped: &MappedTrajectory,
) -> Result<TrajectoryEvaluation> {
    let mut d_star = 0.0;
    let mut delta_t = 0.0;
    let mut pairs = 0usize;
    for w in mapped.records.windows(2) {
        debug_assert!(w[0].timestamp < w[1].timestamp, "records out of order");
        if w[0].point.on_route && w[1].point.on_route {
            d_star += signed_route_distance(route, &w[0].point, &w[1].point)?;
            delta_t += w[1].timestamp - w[0].timestamp;
            pairs += 1;
        }
    }
    let usability = if pairs == 0 {
        Usability::NoPair
    } else if d_star < 0.0 {
        Usability::Backward
    } else if delta_t <= 0.0 && d_star > 0.0 {
        log::warn!(
            "trajectory {}: {} m of on-route movement in zero elapsed time, excluded",
            mapped.id,
            d_star
        );
        Usability::DegenerateSpeed
    } else {
        Usability::Usable
    };
    let d = route.total_length();
    let (weight, speed, predicted_time) =
        if usability == Usability::Usable && d_star > 0.0 && delta_t > 0.0 {
            let s = d_star / delta_t;
            ((d_star / d).clamp(0.0, 1.0), Some(s), Some(d / s))
        } else {
            (0.0, None, None)
        };
    Ok(TrajectoryEvaluation {
        id: mapped.id.clone(),
        d_star,
        delta_t,
        usability,
        speed,
        predicted_time,
        weight,
    })
}

/// The usable subset, in input order.
pub fn build_usable_set(evals: &[TrajectoryEvaluation]) -> Vec<&TrajectoryEvaluation> {
    evals.iter().filter(|e| e.is_usable()).collect()
}

/// Effective number of fully mapped trajectories: the sum of the weights.
pub fn effective_k(weights: &[f64]) -> f64 {
    weights.iter().sum()
}

/// Evaluation of a whole dataset plus its aggregate counts.
#[derive(Debug, Clone)]
pub struct TpuSummary {
    pub evaluations: Vec<TrajectoryEvaluation>,
    /// K: number of trajectories evaluated.
    pub k_total: usize,
    /// |U|: number of usable trajectories.
    pub usable_count: usize,
    /// K_eff: sum of usable weights.
    pub k_eff: f64,
    /// Trajectories excluded by the degenerate-speed rule.
    pub degenerate_speed: usize,
}

impl TpuSummary {
    pub fn from_evaluations(evaluations: Vec<TrajectoryEvaluation>) -> Self {
        let k_total = evaluations.len();
        let usable_count = evaluations.iter().filter(|e| e.is_usable()).count();
        let k_eff = evaluations
            .iter()
            .filter(|e| e.is_usable())
            .map(|e| e.weight)
            .sum();
        let degenerate_speed = evaluations
            .iter()
            .filter(|e| e.usability == Usability::DegenerateSpeed)
            .count();
        TpuSummary {
            evaluations,
            k_total,
            usable_count,
            k_eff,
            degenerate_speed,
        }
    }

    /// Predicted times and weights of the trajectories that carry both,
    /// i.e. the usable ones with positive weight.
    pub fn contributing(&self) -> (Vec<f64>, Vec<f64>) {
        let mut times = Vec::new();
        let mut weights = Vec::new();
        for e in &self.evaluations {
            if let Some(t) = e.predicted_time {
                times.push(t);
                weights.push(e.weight);
            }
        }
        (times, weights)
    }

    /// Unweighted ECDF over all predicted times.
    pub fn unweighted_cdf(&self) -> Result<EmpiricalCdf> {
        let (times, _) = self.contributing();
        EmpiricalCdf::new(times)
    }

    /// Weighted ECDF via resampling; see [`weighted_tpu`].
    pub fn weighted_cdf<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<EmpiricalCdf> {
        let (times, weights) = self.contributing();
        weighted_tpu(&times, &weights, rng)
    }
}

/// Evaluate every trajectory in parallel and aggregate.
pub fn evaluate_dataset(route: &Route, mapped: &[MappedTrajectory]) -> Result<TpuSummary> {
    let evaluations = mapped
        .par_iter()
        .map(|t| evaluate_trajectory(route, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(TpuSummary::from_evaluations(evaluations))
}

/// Empirical CDF of travel times: F(t) = fraction of samples <= t.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    times: Vec<f64>,
}

impl EmpiricalCdf {
    /// Build from a non-empty list of finite times. Input order is irrelevant.
    pub fn new(mut times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::NoData("no travel times to build a CDF from".into()));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidParameter("non-finite travel time".into()));
        }
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(EmpiricalCdf { times })
    }

    /// Sorted sample times.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// F(t): fraction of samples <= t. Right-continuous, 0 below the minimum,
    /// 1 at and above the maximum.
    pub fn value(&self, t: f64) -> f64 {
        self.times.partition_point(|&x| x <= t) as f64 / self.times.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.times[0]
    }

    pub fn max(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// KS distance to another ECDF.
    pub fn ks_distance(&self, other: &EmpiricalCdf) -> f64 {
        crate::stats::ks_two_sample_sorted(&self.times, &other.times)
    }
}

/// Unweighted ECDF of predicted travel times.
pub fn empirical_cdf(times: &[f64]) -> Result<EmpiricalCdf> {
    EmpiricalCdf::new(times.to_vec())
}

/// Probability of arriving within `b` seconds.
pub fn query_arrival_probability(cdf: &EmpiricalCdf, b: f64) -> f64 {
    cdf.value(b)
}

/// Smallest sampled time t with F(t) >= p, for p in (0, 1].
pub fn query_time_at_confidence(cdf: &EmpiricalCdf, p: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "confidence level {p} outside (0, 1]"
        )));
    }
    let n = cdf.times.len();
    let idx = ((p * n as f64).ceil() as usize).clamp(1, n) - 1;
    Ok(cdf.times[idx])
}

/// Draw `draws` samples with replacement, probabilities proportional to the
/// weights. Items of zero weight are never drawn.
pub fn weighted_sample<R: Rng + ?Sized>(
    times: &[f64],
    weights: &[f64],
    draws: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if times.len() != weights.len() {
        return Err(Error::InvalidParameter(format!(
            "{} times against {} weights",
            times.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidParameter("weights must be finite and >= 0".into()));
    }
    let mut cum = Vec::with_capacity(weights.len());
    let mut total = 0.0;
    for w in weights {
        total += w;
        cum.push(total);
    }
    if total <= 0.0 {
        return Err(Error::NoData("all sampling weights are zero".into()));
    }
    let last_positive = weights
        .iter()
        .rposition(|&w| w > 0.0)
        .expect("total > 0 implies a positive weight");
    let mut out = Vec::with_capacity(draws);
    for _ in 0..draws {
        let u = rng.random::<f64>() * total;
        let idx = cum.partition_point(|&c| c <= u).min(last_positive);
        out.push(times[idx]);
    }
    Ok(out)
}

/// Weighted TPU: resample round(K_eff) times (at least one) and return the
/// ECDF of the resampled travel times.
pub fn weighted_tpu<R: Rng + ?Sized>(
    times: &[f64],
    weights: &[f64],
    rng: &mut R,
) -> Result<EmpiricalCdf> {
    let k_eff = effective_k(weights);
    let draws = (k_eff.round() as usize).max(1);
    EmpiricalCdf::new(weighted_sample(times, weights, draws, rng)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::PlanarPoint;
    use crate::mapmatch::Matcher;
    use crate::model::{GpsRecord, Trajectory};
    use crate::network::{MappedPoint, MappedRecord, RoadNetwork, RouteStep, Segment};

    fn route_of_length(d: f64) -> Route {
        let net = RoadNetwork::new(vec![Segment::new(
            1,
            vec![PlanarPoint::new(0.0, 0.0), PlanarPoint::new(d, 0.0)],
        )
        .unwrap()])
        .unwrap();
        Route::new(
            &net,
            vec![RouteStep {
                segment: 1,
                reversed: false,
            }],
        )
        .unwrap()
    }

    fn rec(arc: f64, on_route: bool, timestamp: f64) -> MappedRecord {
        MappedRecord {
            timestamp,
            point: MappedPoint {
                segment: 1,
                arc_position: arc,
                snapped: PlanarPoint::new(arc, 0.0),
                on_route,
            },
        }
    }

    fn mt(id: &str, records: Vec<MappedRecord>) -> MappedTrajectory {
        MappedTrajectory {
            id: id.into(),
            records,
        }
    }

    #[test]
    fn forward_pair_arithmetic() {
        let route = route_of_length(1000.0);
        let t = mt("a", vec![rec(100.0, true, 0.0), rec(500.0, true, 20.0)]);
        let e = evaluate_trajectory(&route, &t).unwrap();
        assert!(e.is_usable());
        assert_eq!(e.d_star, 400.0);
        assert_eq!(e.delta_t, 20.0);
        assert_eq!(e.speed, Some(20.0));
        assert_eq!(e.predicted_time, Some(50.0));
        assert_eq!(e.weight, 0.4);
    }

    #[test]
    fn on_route_points_without_consecutive_pairs_do_not_contribute() {
        // On-route at positions 0, 2, 4 with off-route records between them.
        let route = route_of_length(1000.0);
        let t = mt(
            "traveler3",
            vec![
                rec(100.0, true, 0.0),
                rec(150.0, false, 10.0),
                rec(300.0, true, 20.0),
                rec(350.0, false, 30.0),
                rec(500.0, true, 40.0),
            ],
        );
        let e = evaluate_trajectory(&route, &t).unwrap();
        assert_eq!(e.usability, Usability::NoPair);
        assert!(!e.is_usable());
        assert_eq!(e.weight, 0.0);
        assert_eq!(e.predicted_time, None);
    }

    #[test]
    fn net_backward_movement_is_not_usable() {
        let route = route_of_length(1000.0);
        let t = mt("back", vec![rec(600.0, true, 0.0), rec(100.0, true, 20.0)]);
        let e = evaluate_trajectory(&route, &t).unwrap();
        assert_eq!(e.usability, Usability::Backward);
        assert_eq!(e.d_star, -500.0);
        assert_eq!(e.weight, 0.0);
    }

    #[test]
    fn off_route_gaps_are_excluded_from_elapsed_time() {
        // Pairs (0,1) and (3,4) qualify; the detour between 1 and 3 does not.
        let route = route_of_length(1000.0);
        let t = mt(
            "detour",
            vec![
                rec(0.0, true, 0.0),
                rec(200.0, true, 10.0),
                rec(250.0, false, 20.0),
                rec(400.0, true, 30.0),
                rec(700.0, true, 45.0),
            ],
        );
        let e = evaluate_trajectory(&route, &t).unwrap();
        assert!(e.is_usable());
        assert_eq!(e.d_star, 200.0 + 300.0);
        assert_eq!(e.delta_t, 10.0 + 15.0);
        assert_eq!(e.speed, Some(20.0));
        assert_eq!(e.weight, 0.5);
    }

    #[test]
    fn single_record_yields_no_pair() {
        let route = route_of_length(1000.0);
        let e = evaluate_trajectory(&route, &mt("one", vec![rec(5.0, true, 0.0)])).unwrap();
        assert_eq!(e.usability, Usability::NoPair);
    }

    #[test]
    fn zero_distance_pair_is_usable_with_zero_weight() {
        let route = route_of_length(1000.0);
        let t = mt("still", vec![rec(300.0, true, 0.0), rec(300.0, true, 20.0)]);
        let e = evaluate_trajectory(&route, &t).unwrap();
        assert!(e.is_usable());
        assert_eq!(e.weight, 0.0);
        assert_eq!(e.predicted_time, None);
    }

    #[test]
    fn weight_is_clamped_to_one() {
        // Noise can push d_star past the route length.
        let route = route_of_length(400.0);
        let t = mt("long", vec![rec(0.0, true, 0.0), rec(400.0, true, 10.0), ]);
        let e = evaluate_trajectory(&route, &t).unwrap();
        assert_eq!(e.weight, 1.0);
    }

    #[test]
    fn usable_set_and_effective_k() {
        let route = route_of_length(1000.0);
        let evals: Vec<TrajectoryEvaluation> = [
            mt("t1", vec![rec(0.0, true, 0.0), rec(1000.0, true, 50.0)]),
            mt("t2", vec![rec(0.0, true, 0.0), rec(600.0, true, 30.0)]),
            mt(
                "t3",
                vec![
                    rec(100.0, true, 0.0),
                    rec(150.0, false, 10.0),
                    rec(300.0, true, 20.0),
                ],
            ),
        ]
        .iter()
        .map(|t| evaluate_trajectory(&route, t).unwrap())
        .collect();
        let usable = build_usable_set(&evals);
        assert_eq!(usable.len(), 2);
        assert_eq!(usable[0].id, "t1");
        let weights: Vec<f64> = usable.iter().map(|e| e.weight).collect();
        assert_eq!(effective_k(&weights), 1.6);
        assert_eq!(effective_k(&[]), 0.0);
        let summary = TpuSummary::from_evaluations(evals);
        assert_eq!(summary.k_total, 3);
        assert_eq!(summary.usable_count, 2);
        assert!((summary.k_eff - 1.6).abs() < 1e-15);
        assert!(summary.k_eff <= summary.usable_count as f64);
        assert!(summary.usable_count <= summary.k_total);
    }

    #[test]
    fn ecdf_examples() {
        let single = empirical_cdf(&[50.0]).unwrap();
        assert_eq!(single.value(49.999), 0.0);
        assert_eq!(single.value(50.0), 1.0);
        assert_eq!(single.value(1e9), 1.0);

        let cdf = empirical_cdf(&[30.0, 10.0, 20.0]).unwrap();
        assert_eq!(cdf.times(), &[10.0, 20.0, 30.0]);
        assert!((cdf.value(20.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(cdf.value(cdf.max()), 1.0);
        assert_eq!(query_arrival_probability(&cdf, 5.0), 0.0);

        assert!(empirical_cdf(&[]).is_err());
        assert!(empirical_cdf(&[f64::NAN]).is_err());
    }

    #[test]
    fn ecdf_is_monotone() {
        let cdf = empirical_cdf(&[3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0]).unwrap();
        let mut prev = 0.0;
        for i in 0..100 {
            let v = cdf.value(i as f64 * 0.1);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn time_at_confidence_is_an_order_statistic() {
        let cdf = empirical_cdf(&[60.0, 80.0, 100.0, 120.0, 140.0]).unwrap();
        assert_eq!(query_time_at_confidence(&cdf, 0.8).unwrap(), 120.0);
        assert_eq!(query_time_at_confidence(&cdf, 1.0).unwrap(), 140.0);
        assert_eq!(query_time_at_confidence(&cdf, 0.2).unwrap(), 60.0);
        assert_eq!(query_time_at_confidence(&cdf, 0.01).unwrap(), 60.0);
        assert!(query_time_at_confidence(&cdf, 0.0).is_err());
        assert!(query_time_at_confidence(&cdf, 1.5).is_err());
        // F(t) >= p holds at the returned time.
        assert!(cdf.value(120.0) >= 0.8);
        assert!(cdf.value(119.999) < 0.8);
    }

    #[test]
    fn zero_weight_items_are_never_drawn() {
        let mut rng = crate::rng::stream(3, "tpu-tests", b"zero-weight");
        let sample = weighted_sample(&[10.0, 99.0], &[1.0, 0.0], 1000, &mut rng).unwrap();
        assert!(sample.iter().all(|&t| t == 10.0));
        let cdf = weighted_tpu(&[10.0, 99.0], &[1.0, 0.0], &mut rng).unwrap();
        assert_eq!(cdf.times(), &[10.0]);
    }

    #[test]
    fn all_zero_weights_report_no_data() {
        let mut rng = crate::rng::stream(3, "tpu-tests", b"no-data");
        assert!(matches!(
            weighted_tpu(&[10.0, 99.0], &[0.0, 0.0], &mut rng),
            Err(Error::NoData(_))
        ));
        assert!(weighted_sample(&[10.0], &[1.0, 2.0], 5, &mut rng).is_err());
        assert!(weighted_sample(&[10.0], &[-1.0], 5, &mut rng).is_err());
    }

    #[test]
    fn uniform_weights_recover_the_unweighted_ecdf() {
        let mut rng = crate::rng::stream(3, "tpu-tests", b"uniform");
        let times: Vec<f64> = (0..50).map(|i| 40.0 + i as f64).collect();
        let weights = vec![0.7; times.len()];
        let sample = weighted_sample(&times, &weights, 100_000, &mut rng).unwrap();
        let resampled = EmpiricalCdf::new(sample).unwrap();
        let direct = empirical_cdf(&times).unwrap();
        assert!(resampled.ks_distance(&direct) < 0.02);
    }

    #[test]
    fn resample_size_is_rounded_k_eff_with_a_floor_of_one() {
        let mut rng = crate::rng::stream(3, "tpu-tests", b"draws");
        let cdf = weighted_tpu(&[10.0, 20.0, 30.0], &[0.9, 0.8, 0.9], &mut rng).unwrap();
        assert_eq!(cdf.len(), 3); // round(2.6)
        let cdf = weighted_tpu(&[10.0], &[0.1], &mut rng).unwrap();
        assert_eq!(cdf.len(), 1);
    }

    #[test]
    fn draw_frequencies_follow_the_weights() {
        let mut rng = crate::rng::stream(3, "tpu-tests", b"freq");
        let sample = weighted_sample(&[1.0, 2.0], &[0.25, 0.75], 100_000, &mut rng).unwrap();
        let ones = sample.iter().filter(|&&t| t == 1.0).count() as f64;
        let frac = ones / sample.len() as f64;
        assert!((frac - 0.25).abs() < 0.005, "fraction {frac}");
    }

    #[test]
    fn pipeline_telescopes_with_exact_zero_noise() {
        // A fully on-route trajectory's d_star is arc(last) - arc(first), and
        // the predicted time is route length over observed average speed.
        let net = RoadNetwork::new(vec![Segment::new(
            1,
            vec![PlanarPoint::new(0.0, 0.0), PlanarPoint::new(4320.0, 0.0)],
        )
        .unwrap()])
        .unwrap();
        let route = Route::new(
            &net,
            vec![RouteStep {
                segment: 1,
                reversed: false,
            }],
        )
        .unwrap();
        let speed = 24.0;
        let t = Trajectory::new(
            "exact",
            (0..10)
                .map(|j| {
                    GpsRecord::new(
                        PlanarPoint::new(speed * 20.0 * j as f64, 0.0),
                        20.0 * j as f64,
                    )
                })
                .collect(),
        )
        .unwrap();
        let matcher = Matcher::with_route(&net, &route);
        let mapped = matcher.map_trajectory(&t);
        let e = evaluate_trajectory(&route, &mapped).unwrap();
        assert_eq!(e.d_star, speed * 180.0);
        assert_eq!(e.delta_t, 180.0);
        assert_eq!(e.speed, Some(speed));
        assert_eq!(e.predicted_time, Some(4320.0 / speed));
        assert_eq!(e.predicted_time, Some(180.0));
        assert_eq!(e.weight, 1.0);
    }
}
