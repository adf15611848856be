//! Privacy-preserving travel-time prediction.
//!
//! Location traces are sanitized record by record with planar Laplace noise
//! under a per-trajectory budget, snapped back onto a road network, and fed
//! into a travel-time update that weights each trajectory by how much of the
//! target route its noisy observations still cover. The crate also carries
//! the utility and adversary metrics used to characterize that trade-off,
//! a small trace simulator, and a driver that sweeps privacy budgets and
//! writes report files.
//!
//! Everything downstream of a master seed is deterministic: per-trajectory
//! and per-chunk RNG streams are derived by hashing, so results do not
//! depend on thread count or iteration order.

pub mod error;
pub mod experiment;
pub mod geom;
pub mod io;
pub mod mapmatch;
pub mod metrics;
pub mod model;
pub mod network;
pub mod rng;
pub mod sanitize;
pub mod stats;
pub mod tpu;
pub mod tracegen;

pub use error::{Error, ErrorKind, Result};
pub use geom::PlanarPoint;
pub use model::{GpsRecord, Trajectory};
pub use network::{MappedTrajectory, RoadNetwork, Route, RouteStep, Segment};
