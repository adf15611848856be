//! File formats.
//!
//! Traces travel as CSV with header `traj_id,timestamp,x,y` (planar meters)
//! or `traj_id,timestamp,lat,lon` (WGS84, projected at load time). Networks
//! and routes are JSON. Map-matched datasets are CSV with one row per record.
//! Travel-time CDFs are `t,F` CSV files with a JSON sidecar carrying the
//! population counts. Floats are written in shortest round-trip form, so a
//! save/load cycle reproduces the exact bits.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write as _};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{project_latlon, PlanarPoint};
use crate::metrics::CpdReport;
use crate::model::{GpsRecord, Trajectory};
use crate::network::{
    MappedPoint, MappedRecord, MappedTrajectory, RoadNetwork, Route, RouteStep, Segment,
};
use crate::tpu::EmpiricalCdf;
use crate::tracegen::{subsample_dataset, SubsampleStrategy};

/// Coordinate reference system of an input file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Crs {
    #[default]
    Planar,
    Wgs84,
}

impl std::str::FromStr for Crs {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "planar" => Ok(Crs::Planar),
            "wgs84" => Ok(Crs::Wgs84),
            other => Err(Error::InvalidParameter(format!(
                "unknown crs {other:?}, expected planar or wgs84"
            ))),
        }
    }
}

pub const TRACE_HEADER_PLANAR: [&str; 4] = ["traj_id", "timestamp", "x", "y"];
pub const TRACE_HEADER_WGS84: [&str; 4] = ["traj_id", "timestamp", "lat", "lon"];
pub const MAPPED_HEADER: [&str; 7] = [
    "traj_id", "timestamp", "seg_id", "arc_pos", "on_route", "x_snap", "y_snap",
];

fn open_reader(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn create_writer(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let message = e.to_string();
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        _ => Error::BadFile {
            path: path.into(),
            reason: message,
        },
    }
}

fn json_error(path: &Path, e: serde_json::Error) -> Error {
    Error::BadFile {
        path: path.into(),
        reason: e.to_string(),
    }
}

/// Write any serializable value as pretty JSON.
pub fn save_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut w = create_writer(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| json_error(path, e))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Read a JSON file into any deserializable value.
pub fn load_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    serde_json::from_reader(open_reader(path)?).map_err(|e| json_error(path, e))
}

/// How [`load_traces`] interprets and post-processes a trace file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceLoadOptions {
    pub crs: Crs,
    /// Projection origin (lat, lon) for WGS84 files; defaults to the first
    /// coordinate seen.
    pub origin: Option<(f64, f64)>,
    /// Subsample each trajectory down to this many records.
    pub n_max: Option<usize>,
    pub strategy: SubsampleStrategy,
    /// Skip malformed rows with a warning instead of failing the load.
    pub lenient: bool,
    /// Master seed for random subsampling streams.
    pub master_seed: u64,
}

impl Default for TraceLoadOptions {
    fn default() -> Self {
        TraceLoadOptions {
            crs: Crs::Planar,
            origin: None,
            n_max: None,
            strategy: SubsampleStrategy::EqualSpaced,
            lenient: false,
            master_seed: 0,
        }
    }
}

fn parse_f64(record: &csv::StringRecord, idx: usize, name: &str) -> std::result::Result<f64, String> {
    let raw = record.get(idx).ok_or_else(|| format!("missing {name} field"))?;
    let value: f64 = raw
        .parse()
        .map_err(|_| format!("{name} field {raw:?} is not a number"))?;
    if !value.is_finite() {
        return Err(format!("{name} field {raw:?} is not finite"));
    }
    Ok(value)
}

/// Load GPS trajectories from CSV.
///
/// Rows are grouped by `traj_id` in order of first appearance and sorted by
/// timestamp within each trajectory. Malformed rows fail the load with their
/// line number unless `lenient` is set, in which case they are logged and
/// skipped. Trajectories that remain invalid after sorting (duplicate
/// timestamps, non-finite values) are dropped with a warning; the rest
/// proceed.
pub fn load_traces(path: impl AsRef<Path>, opts: &TraceLoadOptions) -> Result<Vec<Trajectory>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(open_reader(path)?);
    let expected: &[&str] = match opts.crs {
        Crs::Planar => &TRACE_HEADER_PLANAR,
        Crs::Wgs84 => &TRACE_HEADER_WGS84,
    };
    let header = reader.headers().map_err(|e| csv_error(path, e))?;
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::BadFile {
            path: path.into(),
            reason: format!("expected header {}, found {}", expected.join(","), header.iter().collect::<Vec<_>>().join(",")),
        });
    }

    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<GpsRecord>> = HashMap::new();
    let mut origin = opts.origin;
    let row_error = |line: u64, reason: String| -> Result<()> {
        if opts.lenient {
            log::warn!("{}:{line}: {reason}, skipping row", path.display());
            Ok(())
        } else {
            Err(Error::Parse {
                path: path.into(),
                line,
                reason,
            })
        }
    };

    for item in reader.records() {
        let record = match item {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                row_error(line, e.to_string())?;
                continue;
            }
        };
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let parsed = (|| -> std::result::Result<(String, GpsRecord), String> {
            if record.len() != 4 {
                return Err(format!("expected 4 fields, found {}", record.len()));
            }
            let id = record.get(0).unwrap_or("");
            if id.is_empty() {
                return Err("empty traj_id".into());
            }
            let timestamp = parse_f64(&record, 1, expected[1])?;
            let a = parse_f64(&record, 2, expected[2])?;
            let b = parse_f64(&record, 3, expected[3])?;
            let point = match opts.crs {
                Crs::Planar => PlanarPoint::new(a, b),
                Crs::Wgs84 => {
                    let o = *origin.get_or_insert((a, b));
                    project_latlon(a, b, o).map_err(|e| e.to_string())?
                }
            };
            Ok((id.to_string(), GpsRecord::new(point, timestamp)))
        })();
        match parsed {
            Ok((id, rec)) => {
                groups
                    .entry(id.clone())
                    .or_insert_with(|| {
                        order.push(id);
                        Vec::new()
                    })
                    .push(rec);
            }
            Err(reason) => row_error(line, reason)?,
        }
    }

    let mut out = Vec::with_capacity(order.len());
    for id in order {
        let mut records = groups.remove(&id).expect("grouped above");
        records.sort_by(|a, b| a.timestamp.partial_cmp(&b.timestamp).expect("finite timestamps"));
        match Trajectory::new(id, records) {
            Ok(t) => out.push(t),
            Err(e) => log::warn!("{}: dropping {e}", path.display()),
        }
    }
    if out.is_empty() {
        return Err(Error::BadFile {
            path: path.into(),
            reason: "no usable trajectories".into(),
        });
    }
    match opts.n_max {
        Some(n_max) => subsample_dataset(&out, n_max, opts.strategy, opts.master_seed),
        None => Ok(out),
    }
}

/// Write trajectories as planar trace CSV.
pub fn save_traces(path: impl AsRef<Path>, trajectories: &[Trajectory]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(create_writer(path)?);
    w.write_record(TRACE_HEADER_PLANAR).map_err(|e| csv_error(path, e))?;
    for t in trajectories {
        for r in &t.records {
            w.write_record(&[
                t.id.as_str(),
                &r.timestamp.to_string(),
                &r.point.x.to_string(),
                &r.point.y.to_string(),
            ])
            .map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize, Deserialize)]
struct SegmentFile {
    id: u64,
    polyline: Vec<[f64; 2]>,
    #[serde(default)]
    crs: Crs,
}

/// Load a road network from JSON: a list of `{id, polyline, crs}` segments.
///
/// WGS84 polylines (vertices as `[lat, lon]`) are projected around `origin`,
/// which defaults to the first WGS84 vertex in the file.
pub fn load_network(path: impl AsRef<Path>, origin: Option<(f64, f64)>) -> Result<RoadNetwork> {
    let path = path.as_ref();
    let files: Vec<SegmentFile> = load_json(path)?;
    let mut origin = origin;
    let mut segments = Vec::with_capacity(files.len());
    for file in &files {
        let vertices: Vec<PlanarPoint> = match file.crs {
            Crs::Planar => file.polyline.iter().map(|&[x, y]| PlanarPoint::new(x, y)).collect(),
            Crs::Wgs84 => {
                let first = file.polyline.first().ok_or_else(|| Error::InvalidNetwork(format!(
                    "segment {} has an empty polyline",
                    file.id
                )))?;
                let o = *origin.get_or_insert((first[0], first[1]));
                file.polyline
                    .iter()
                    .map(|&[lat, lon]| project_latlon(lat, lon, o))
                    .collect::<Result<_>>()?
            }
        };
        segments.push(Segment::new(file.id, vertices)?);
    }
    RoadNetwork::new(segments)
}

/// Write a network as planar JSON.
pub fn save_network(path: impl AsRef<Path>, network: &RoadNetwork) -> Result<()> {
    let files: Vec<SegmentFile> = network
        .segments()
        .iter()
        .map(|s| SegmentFile {
            id: s.id(),
            polyline: s.polyline().iter().map(|p| [p.x, p.y]).collect(),
            crs: Crs::Planar,
        })
        .collect();
    save_json(path, &files)
}

#[derive(Serialize, Deserialize)]
struct RouteStepFile {
    id: u64,
    #[serde(default)]
    reversed: bool,
}

#[derive(Serialize, Deserialize)]
struct RouteFile {
    segments: Vec<RouteStepFile>,
}

/// Load a route, `{"segments": [{"id", "reversed"}]}`, against a network.
pub fn load_route(path: impl AsRef<Path>, network: &RoadNetwork) -> Result<Route> {
    let file: RouteFile = load_json(path)?;
    let steps = file
        .segments
        .into_iter()
        .map(|s| RouteStep {
            segment: s.id,
            reversed: s.reversed,
        })
        .collect();
    Route::new(network, steps)
}

pub fn save_route(path: impl AsRef<Path>, route: &Route) -> Result<()> {
    let file = RouteFile {
        segments: route
            .steps()
            .iter()
            .map(|s| RouteStepFile {
                id: s.segment,
                reversed: s.reversed,
            })
            .collect(),
    };
    save_json(path, &file)
}

/// Write map-matched trajectories as CSV.
pub fn save_mapped(path: impl AsRef<Path>, mapped: &[MappedTrajectory]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(create_writer(path)?);
    w.write_record(MAPPED_HEADER).map_err(|e| csv_error(path, e))?;
    for t in mapped {
        for r in &t.records {
            w.write_record(&[
                t.id.as_str(),
                &r.timestamp.to_string(),
                &r.point.segment.to_string(),
                &r.point.arc_position.to_string(),
                if r.point.on_route { "true" } else { "false" },
                &r.point.snapped.x.to_string(),
                &r.point.snapped.y.to_string(),
            ])
            .map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Load a map-matched dataset. The format is machine-written, so parsing is
/// strict: any malformed row or out-of-order timestamp fails the load.
pub fn load_mapped(path: impl AsRef<Path>) -> Result<Vec<MappedTrajectory>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(open_reader(path)?);
    let header = reader.headers().map_err(|e| csv_error(path, e))?;
    if header.iter().collect::<Vec<_>>() != MAPPED_HEADER {
        return Err(Error::BadFile {
            path: path.into(),
            reason: format!("expected header {}", MAPPED_HEADER.join(",")),
        });
    }
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<MappedRecord>> = HashMap::new();
    for item in reader.records() {
        let record = item.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let parse = (|| -> std::result::Result<(String, MappedRecord), String> {
            if record.len() != 7 {
                return Err(format!("expected 7 fields, found {}", record.len()));
            }
            let id = record.get(0).unwrap_or("");
            if id.is_empty() {
                return Err("empty traj_id".into());
            }
            let timestamp = parse_f64(&record, 1, "timestamp")?;
            let raw_seg = record.get(2).unwrap_or("");
            let segment: u64 = raw_seg
                .parse()
                .map_err(|_| format!("seg_id field {raw_seg:?} is not an integer"))?;
            let arc_position = parse_f64(&record, 3, "arc_pos")?;
            let on_route = match record.get(4).unwrap_or("") {
                "true" => true,
                "false" => false,
                other => return Err(format!("on_route field {other:?} is not a boolean")),
            };
            let x = parse_f64(&record, 5, "x_snap")?;
            let y = parse_f64(&record, 6, "y_snap")?;
            Ok((
                id.to_string(),
                MappedRecord {
                    timestamp,
                    point: MappedPoint {
                        segment,
                        arc_position,
                        snapped: PlanarPoint::new(x, y),
                        on_route,
                    },
                },
            ))
        })();
        let (id, rec) = parse.map_err(|reason| Error::Parse {
            path: path.into(),
            line,
            reason,
        })?;
        groups
            .entry(id.clone())
            .or_insert_with(|| {
                order.push(id);
                Vec::new()
            })
            .push(rec);
    }
    let mut out = Vec::with_capacity(order.len());
    for id in order {
        let records = groups.remove(&id).expect("grouped above");
        if records.windows(2).any(|w| w[0].timestamp >= w[1].timestamp) {
            return Err(Error::BadTrajectory {
                id,
                reason: "timestamps not strictly increasing".into(),
            });
        }
        out.push(MappedTrajectory { id, records });
    }
    Ok(out)
}

/// Companion counts for a published CDF file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpuSidecar {
    #[serde(rename = "K")]
    pub k: usize,
    pub usable_count: usize,
    #[serde(rename = "K_eff")]
    pub k_eff: f64,
}

/// Sidecar file next to a CSV report: same name, `.json` extension.
pub fn sidecar_path(path: impl AsRef<Path>) -> PathBuf {
    path.as_ref().with_extension("json")
}

/// Write an empirical CDF as `t,F` rows, one per sample.
pub fn save_cdf(path: impl AsRef<Path>, cdf: &EmpiricalCdf) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(create_writer(path)?);
    w.write_record(["t", "F"]).map_err(|e| csv_error(path, e))?;
    let n = cdf.len() as f64;
    for (i, t) in cdf.times().iter().enumerate() {
        w.write_record(&[t.to_string(), ((i + 1) as f64 / n).to_string()])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read back a `t,F` file as (t, F) pairs.
pub fn load_cdf(path: impl AsRef<Path>) -> Result<Vec<(f64, f64)>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(open_reader(path)?);
    let header = reader.headers().map_err(|e| csv_error(path, e))?;
    if header.iter().collect::<Vec<_>>() != ["t", "F"] {
        return Err(Error::BadFile {
            path: path.into(),
            reason: "expected header t,F".into(),
        });
    }
    let mut out = Vec::new();
    for item in reader.records() {
        let record = item.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let pair = (|| -> std::result::Result<(f64, f64), String> {
            Ok((parse_f64(&record, 0, "t")?, parse_f64(&record, 1, "F")?))
        })();
        out.push(pair.map_err(|reason| Error::Parse {
            path: path.into(),
            line,
            reason,
        })?);
    }
    Ok(out)
}

/// Companion counts for a published CPD file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpdSidecar {
    pub n: usize,
    pub trajectories: usize,
    pub mean_correct: f64,
}

/// Write a CPD report as `l,p_l` rows for l = 0..=n.
pub fn save_cpd(path: impl AsRef<Path>, report: &CpdReport) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(create_writer(path)?);
    w.write_record(["l", "p_l"]).map_err(|e| csv_error(path, e))?;
    for (l, p) in report.p.iter().enumerate() {
        w.write_record(&[l.to_string(), p.to_string()])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::ErrorKind;
    use crate::tracegen::{make_network, NetworkKind};

    fn traj(id: &str, points: &[(f64, f64, f64)]) -> Trajectory {
        Trajectory::new(
            id,
            points
                .iter()
                .map(|&(t, x, y)| GpsRecord::new(PlanarPoint::new(x, y), t))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn traces_round_trip_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traces.csv");
        let trajs = vec![
            traj("a", &[(0.0, 0.1 + 0.2, -7.25), (20.0, 1e-7, 314159.26535897933)]),
            traj("b", &[(3.5, 4800.0, 0.0)]),
        ];
        save_traces(&path, &trajs).unwrap();
        let loaded = load_traces(&path, &TraceLoadOptions::default()).unwrap();
        assert_eq!(loaded, trajs);
    }

    #[test]
    fn missing_file_and_wrong_header_are_input_errors() {
        let dir = tempfile::tempdir().unwrap();
        let missing = load_traces(dir.path().join("nope.csv"), &TraceLoadOptions::default());
        assert_eq!(missing.unwrap_err().kind(), ErrorKind::Input);
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "id,t,x,y\na,0,1,2\n").unwrap();
        let err = load_traces(&path, &TraceLoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::BadFile { .. }), "{err}");
    }

    #[test]
    fn malformed_row_reports_its_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traces.csv");
        std::fs::write(&path, "traj_id,timestamp,x,y\na,0,1,2\na,10,oops,2\na,20,3,4\n").unwrap();
        match load_traces(&path, &TraceLoadOptions::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let lenient = TraceLoadOptions {
            lenient: true,
            ..TraceLoadOptions::default()
        };
        let loaded = load_traces(&path, &lenient).unwrap();
        assert_eq!(loaded.len(), 1);
        assert_eq!(loaded[0].records.len(), 2);
        assert_eq!(loaded[0].records[1].timestamp, 20.0);
    }

    #[test]
    fn rows_are_sorted_and_bad_trajectories_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traces.csv");
        // "a" arrives out of order; "b" has a duplicate timestamp.
        std::fs::write(
            &path,
            "traj_id,timestamp,x,y\na,20,3,0\nb,0,0,0\na,0,1,0\nb,0,5,0\na,10,2,0\n",
        )
        .unwrap();
        let loaded = load_traces(&path, &TraceLoadOptions::default()).unwrap();
        assert_eq!(loaded.len(), 1);
        assert_eq!(loaded[0].id, "a");
        let ts: Vec<f64> = loaded[0].records.iter().map(|r| r.timestamp).collect();
        assert_eq!(ts, vec![0.0, 10.0, 20.0]);
        assert_eq!(loaded[0].records[0].point.x, 1.0);
    }

    #[test]
    fn wgs84_traces_project_around_the_first_point() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traces.csv");
        std::fs::write(
            &path,
            "traj_id,timestamp,lat,lon\na,0,48.8,2.35\na,20,48.801,2.35\n",
        )
        .unwrap();
        let opts = TraceLoadOptions {
            crs: Crs::Wgs84,
            ..TraceLoadOptions::default()
        };
        let loaded = load_traces(&path, &opts).unwrap();
        assert_eq!(loaded[0].records[0].point, PlanarPoint::new(0.0, 0.0));
        let expected = project_latlon(48.801, 2.35, (48.8, 2.35)).unwrap();
        assert_eq!(loaded[0].records[1].point, expected);
        assert!((expected.y - 111.19).abs() < 1.0);
    }

    #[test]
    fn loading_applies_n_max_subsampling() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traces.csv");
        let long: Vec<(f64, f64, f64)> = (0..25).map(|j| (j as f64, j as f64, 0.0)).collect();
        save_traces(&path, &[traj("a", &long)]).unwrap();
        let opts = TraceLoadOptions {
            n_max: Some(10),
            ..TraceLoadOptions::default()
        };
        let loaded = load_traces(&path, &opts).unwrap();
        assert_eq!(loaded[0].records.len(), 10);
        assert_eq!(loaded[0].records[0].timestamp, 0.0);
        assert_eq!(loaded[0].records[9].timestamp, 24.0);
    }

    #[test]
    fn network_and_route_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let net_path = dir.path().join("net.json");
        let route_path = dir.path().join("route.json");
        let (net, route) = make_network(NetworkKind::ThreeParallelRoads, 4800.0, 100.0).unwrap();
        save_network(&net_path, &net).unwrap();
        save_route(&route_path, &route).unwrap();
        let net2 = load_network(&net_path, None).unwrap();
        assert_eq!(net2.segments(), net.segments());
        let route2 = load_route(&route_path, &net2).unwrap();
        assert_eq!(route2.steps(), route.steps());
        assert_eq!(route2.total_length(), route.total_length());
        let text = std::fs::read_to_string(&net_path).unwrap();
        assert!(text.contains("\"crs\": \"planar\""));
    }

    #[test]
    fn handwritten_route_json_with_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let net_path = dir.path().join("net.json");
        let route_path = dir.path().join("route.json");
        let (net, _) = make_network(NetworkKind::ThreeParallelRoads, 4800.0, 100.0).unwrap();
        save_network(&net_path, &net).unwrap();
        std::fs::write(&route_path, "{\"segments\": [{\"id\": 2}]}").unwrap();
        let route = load_route(&route_path, &net).unwrap();
        assert_eq!(route.steps(), &[RouteStep { segment: 2, reversed: false }]);
        std::fs::write(&route_path, "{\"segments\": [{\"id\": 9}]}").unwrap();
        assert!(load_route(&route_path, &net).is_err());
    }

    #[test]
    fn wgs84_network_projects_like_the_loader() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        std::fs::write(
            &path,
            "[{\"id\": 1, \"polyline\": [[48.8, 2.35], [48.8, 2.36]], \"crs\": \"wgs84\"}]",
        )
        .unwrap();
        let net = load_network(&path, None).unwrap();
        let seg = net.segment(1).unwrap();
        assert_eq!(seg.start(), PlanarPoint::new(0.0, 0.0));
        assert_eq!(seg.end(), project_latlon(48.8, 2.36, (48.8, 2.35)).unwrap());
    }

    #[test]
    fn mapped_round_trip_and_strictness() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mapped.csv");
        let mapped = vec![MappedTrajectory {
            id: "a".into(),
            records: vec![
                MappedRecord {
                    timestamp: 0.0,
                    point: MappedPoint {
                        segment: 1,
                        arc_position: 0.125,
                        snapped: PlanarPoint::new(0.125, 0.0),
                        on_route: true,
                    },
                },
                MappedRecord {
                    timestamp: 20.0,
                    point: MappedPoint {
                        segment: 2,
                        arc_position: 33.3,
                        snapped: PlanarPoint::new(33.3, -100.0),
                        on_route: false,
                    },
                },
            ],
        }];
        save_mapped(&path, &mapped).unwrap();
        assert_eq!(load_mapped(&path).unwrap(), mapped);

        std::fs::write(
            &path,
            "traj_id,timestamp,seg_id,arc_pos,on_route,x_snap,y_snap\na,0,1,0,maybe,0,0\n",
        )
        .unwrap();
        assert!(matches!(load_mapped(&path), Err(Error::Parse { line: 2, .. })));
        std::fs::write(
            &path,
            "traj_id,timestamp,seg_id,arc_pos,on_route,x_snap,y_snap\na,5,1,0,true,0,0\na,5,1,1,true,1,0\n",
        )
        .unwrap();
        assert!(matches!(load_mapped(&path), Err(Error::BadTrajectory { .. })));
    }

    #[test]
    fn cdf_file_lists_one_step_per_sample() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cdf.csv");
        let cdf = crate::tpu::EmpiricalCdf::new(vec![200.0, 180.0, 190.0, 180.0]).unwrap();
        save_cdf(&path, &cdf).unwrap();
        let rows = load_cdf(&path).unwrap();
        assert_eq!(
            rows,
            vec![(180.0, 0.25), (180.0, 0.5), (190.0, 0.75), (200.0, 1.0)]
        );
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cdf_path = dir.path().join("cdf-0.05.csv");
        let side = TpuSidecar {
            k: 1000,
            usable_count: 940,
            k_eff: 812.5,
        };
        let side_path = sidecar_path(&cdf_path);
        assert_eq!(side_path, dir.path().join("cdf-0.05.json"));
        save_json(&side_path, &side).unwrap();
        assert_eq!(load_json::<TpuSidecar>(&side_path).unwrap(), side);
        let text = std::fs::read_to_string(&side_path).unwrap();
        assert!(text.contains("\"K\""), "{text}");
        assert!(text.contains("\"K_eff\""), "{text}");
    }

    #[test]
    fn cpd_file_lists_run_length_distribution() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cpd.csv");
        let report = CpdReport {
            run_counts: vec![1, 2, 1],
            p: vec![0.25, 0.5, 0.25],
            mean_correct: 1.0,
            trajectories: 2,
            n: 2,
        };
        save_cpd(&path, &report).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "l,p_l\n0,0.25\n1,0.5\n2,0.25\n");
    }
}
