//! Experiment driver.
//!
//! Ties the stages into one reproducible run: obtain trajectories (from a
//! trace file or the simulator), evaluate a no-sanitization baseline, then
//! for each epsilon sanitize, map-match, run the travel-time update, and
//! compute the adversary metrics. Emits one CDF file per cell, K_eff and
//! average-distance tables, CPD reports per (epsilon, radius), and a
//! `summary.json` with every number in one place.
//!
//! All randomness derives from the single master seed in the config, and
//! per-trajectory streams do not depend on epsilon, so cells share common
//! random numbers and a rerun is byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{self, TpuSidecar, TraceLoadOptions};
use crate::mapmatch::Matcher;
use crate::metrics::{self, CpdReport};
use crate::model::Trajectory;
use crate::network::{RoadNetwork, Route};
use crate::sanitize::sanitize_dataset;
use crate::tpu::{self, EmpiricalCdf};
use crate::tracegen::{
    self, GeneratedDataset, NetworkKind, SimulationSpec, SpeedModel, SubsampleStrategy,
};

/// Per-trajectory budgets swept by default.
pub const DEFAULT_EPSILONS: [f64; 5] = [0.05, 0.1, 0.3, 0.5, 0.8];
/// CPD hit thresholds (meters) swept by default.
pub const DEFAULT_CLIP_RADII: [f64; 3] = [20.0, 40.0, 80.0];

fn default_epsilons() -> Vec<f64> {
    DEFAULT_EPSILONS.to_vec()
}

fn default_clip_radii() -> Vec<f64> {
    DEFAULT_CLIP_RADII.to_vec()
}

fn default_n_max() -> usize {
    10
}

fn default_strategy() -> SubsampleStrategy {
    SubsampleStrategy::EqualSpaced
}

fn default_trips() -> usize {
    1000
}

fn default_mean() -> f64 {
    24.0
}

fn default_var() -> f64 {
    8.0
}

fn default_tau() -> f64 {
    20.0
}

fn default_n() -> usize {
    10
}

/// Simulation source for a run, mirroring the `simulate` command flags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// 1 = single road, 2 = three parallel roads.
    pub experiment: u8,
    #[serde(default = "default_trips")]
    pub trips: usize,
    #[serde(default = "default_mean")]
    pub mean: f64,
    #[serde(default = "default_var")]
    pub var: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub length: Option<f64>,
    #[serde(default)]
    pub spacing: Option<f64>,
    #[serde(default)]
    pub off_route_fraction: f64,
}

impl SimulateConfig {
    pub fn network_kind(&self) -> Result<NetworkKind> {
        match self.experiment {
            1 => Ok(NetworkKind::SingleRoad),
            2 => Ok(NetworkKind::ThreeParallelRoads),
            other => Err(Error::InvalidParameter(format!(
                "experiment {other} is not defined, expected 1 or 2"
            ))),
        }
    }

    /// Build the network, route, and dataset this config describes.
    pub fn build(&self, master_seed: u64) -> Result<(RoadNetwork, Route, GeneratedDataset)> {
        let kind = self.network_kind()?;
        let (network, route) = tracegen::make_network(
            kind,
            self.length.unwrap_or(tracegen::DEFAULT_ROAD_LENGTH),
            self.spacing.unwrap_or(tracegen::DEFAULT_ROAD_SPACING),
        )?;
        let model = SpeedModel::fit(self.mean, self.var)?;
        let spec = SimulationSpec {
            trips: self.trips,
            tau: self.tau,
            n: self.n,
            off_route_fraction: self.off_route_fraction,
        };
        let data = tracegen::generate_dataset(&network, &route, &model, &spec, master_seed)?;
        Ok((network, route, data))
    }
}

/// A full experiment description. Exactly one of `traces` and `simulate`
/// names the data source; `network` and `route` are required with `traces`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub network: Option<PathBuf>,
    #[serde(default)]
    pub route: Option<PathBuf>,
    #[serde(default)]
    pub traces: Option<PathBuf>,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    pub seed: u64,
    /// Publish weighted CDFs instead of unweighted ones.
    #[serde(default)]
    pub weighted: bool,
    #[serde(default = "default_clip_radii")]
    pub clip_radii: Vec<f64>,
    #[serde(default = "default_strategy")]
    pub subsample: SubsampleStrategy,
}

pub fn load_config(path: impl AsRef<Path>) -> Result<Config> {
    io::load_json(path)
}

/// One (epsilon, metrics) row of the experiment; `epsilon` is `None` for the
/// no-sanitization baseline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellReport {
    pub epsilon: Option<f64>,
    pub k: usize,
    pub usable_count: usize,
    pub k_eff: f64,
    pub degenerate_speed: usize,
    pub ad_raw: Option<f64>,
    pub ad_mapped: Option<f64>,
    pub ks_to_baseline: Option<f64>,
    pub ks_weighted_unweighted: f64,
    pub cpd: Vec<CpdCell>,
    pub cdf_file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CpdCell {
    pub radius: f64,
    pub mean_correct: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub weighted: bool,
    pub n_max: usize,
    pub trajectories: usize,
    pub baseline: CellReport,
    pub cells: Vec<CellReport>,
}

struct CellData {
    report: CellReport,
    published: EmpiricalCdf,
    sidecar: TpuSidecar,
    cpd_reports: Vec<(f64, CpdReport)>,
}

fn eps_label(epsilon: f64) -> String {
    format!("{epsilon}")
}

fn resample_stream(seed: u64) -> rand_chacha::ChaCha8Rng {
    crate::rng::stream(seed, "tpu", b"resample")
}

fn evaluate_cell(
    matcher: &Matcher,
    route: &Route,
    trajectories: &[Trajectory],
    seed: u64,
    weighted: bool,
    cdf_file: String,
) -> Result<(CellData, EmpiricalCdf)> {
    let mapped = matcher.map_dataset(trajectories);
    let summary = tpu::evaluate_dataset(route, &mapped).map_err(|e| Error::stage("tpu", e))?;
    let unweighted = summary.unweighted_cdf().map_err(|e| Error::stage("tpu", e))?;
    let weighted_cdf = summary
        .weighted_cdf(&mut resample_stream(seed))
        .map_err(|e| Error::stage("tpu", e))?;
    let ks_weighted_unweighted = unweighted.ks_distance(&weighted_cdf);
    let published = if weighted { weighted_cdf } else { unweighted.clone() };
    let sidecar = TpuSidecar {
        k: summary.k_total,
        usable_count: summary.usable_count,
        k_eff: summary.k_eff,
    };
    let report = CellReport {
        epsilon: None,
        k: summary.k_total,
        usable_count: summary.usable_count,
        k_eff: summary.k_eff,
        degenerate_speed: summary.degenerate_speed,
        ad_raw: None,
        ad_mapped: None,
        ks_to_baseline: None,
        ks_weighted_unweighted,
        cpd: Vec::new(),
        cdf_file,
    };
    Ok((
        CellData {
            report,
            published,
            sidecar,
            cpd_reports: Vec::new(),
        },
        unweighted,
    ))
}

fn validate_config(config: &Config) -> Result<()> {
    match (&config.traces, &config.simulate) {
        (Some(_), Some(_)) => Err(Error::InvalidParameter(
            "config gives both traces and simulate; pick one source".into(),
        )),
        (None, None) => Err(Error::InvalidParameter(
            "config gives neither traces nor simulate".into(),
        )),
        (Some(_), None) if config.network.is_none() || config.route.is_none() => {
            Err(Error::InvalidParameter(
                "config with traces also needs network and route paths".into(),
            ))
        }
        _ => Ok(()),
    }?;
    if config.epsilons.is_empty() {
        return Err(Error::InvalidParameter("config lists no epsilons".into()));
    }
    for &e in &config.epsilons {
        if !(e.is_finite() && e > 0.0) {
            return Err(Error::InvalidEpsilon(e));
        }
    }
    for &c in &config.clip_radii {
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::InvalidParameter(format!("clip radius {c} must be >= 0")));
        }
    }
    Ok(())
}

fn load_source(config: &Config) -> Result<(RoadNetwork, Route, Vec<Trajectory>)> {
    if let Some(sim) = &config.simulate {
        let (network, route, data) = sim.build(config.seed).map_err(|e| Error::stage("simulate", e))?;
        return Ok((network, route, data.trajectories));
    }
    let stage = |e| Error::stage("load", e);
    let network = io::load_network(config.network.as_ref().expect("validated"), None).map_err(stage)?;
    let route = io::load_route(config.route.as_ref().expect("validated"), &network).map_err(stage)?;
    let opts = TraceLoadOptions {
        n_max: Some(config.n_max),
        strategy: config.subsample,
        master_seed: config.seed,
        ..TraceLoadOptions::default()
    };
    let traces = io::load_traces(config.traces.as_ref().expect("validated"), &opts).map_err(stage)?;
    Ok((network, route, traces))
}

fn write_tables(out_dir: &Path, report: &ExperimentReport) -> Result<()> {
    let keff = out_dir.join("keff_table.csv");
    let mut text = String::from("epsilon,K,usable,K_eff\n");
    let mut row = |label: &str, cell: &CellReport| {
        text += &format!("{label},{},{},{}\n", cell.k, cell.usable_count, cell.k_eff);
    };
    row("baseline", &report.baseline);
    for cell in &report.cells {
        row(&eps_label(cell.epsilon.expect("sweep cell")), cell);
    }
    fs::write(&keff, text).map_err(|e| Error::io(keff.clone(), e))?;

    let ad = out_dir.join("ad_table.csv");
    let mut text = String::from("epsilon,ad_raw,ad_mapped\n");
    for cell in &report.cells {
        text += &format!(
            "{},{},{}\n",
            eps_label(cell.epsilon.expect("sweep cell")),
            cell.ad_raw.expect("sweep cell"),
            cell.ad_mapped.expect("sweep cell"),
        );
    }
    fs::write(&ad, text).map_err(|e| Error::io(ad.clone(), e))
}

/// Run the whole experiment described by `config`, writing reports under
/// `out_dir` and returning every computed number.
pub fn run_experiment(config: &Config, out_dir: impl AsRef<Path>) -> Result<ExperimentReport> {
    let out_dir = out_dir.as_ref();
    validate_config(config)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let (network, route, originals) = load_source(config)?;
    let matcher = Matcher::with_route(&network, &route);
    let orig_mapped = matcher.map_dataset(&originals);

    let (baseline, baseline_unweighted) = evaluate_cell(
        &matcher,
        &route,
        &originals,
        config.seed,
        config.weighted,
        "cdf-baseline.csv".into(),
    )?;

    let cells: Vec<CellData> = config
        .epsilons
        .par_iter()
        .map(|&epsilon| -> Result<CellData> {
            let sanitized = sanitize_dataset(&originals, epsilon, config.seed)
                .map_err(|e| Error::stage("sanitize", e))?;
            let label = eps_label(epsilon);
            let (mut cell, unweighted) = evaluate_cell(
                &matcher,
                &route,
                &sanitized,
                config.seed,
                config.weighted,
                format!("cdf-eps-{label}.csv"),
            )?;
            cell.report.epsilon = Some(epsilon);
            cell.report.ks_to_baseline = Some(baseline_unweighted.ks_distance(&unweighted));
            let stage = |e| Error::stage("metrics", e);
            cell.report.ad_raw = Some(metrics::average_distance(&originals, &sanitized).map_err(stage)?);
            let san_mapped = matcher.map_dataset(&sanitized);
            cell.report.ad_mapped =
                Some(metrics::average_distance_mapped(&orig_mapped, &san_mapped).map_err(stage)?);
            for &radius in &config.clip_radii {
                let cpd = metrics::cpd(&originals, &sanitized, radius).map_err(stage)?;
                cell.report.cpd.push(CpdCell {
                    radius,
                    mean_correct: cpd.mean_correct,
                });
                cell.cpd_reports.push((radius, cpd));
            }
            Ok(cell)
        })
        .collect::<Result<_>>()?;

    let write = |e| Error::stage("write", e);
    for cell in std::iter::once(&baseline).chain(&cells) {
        let cdf_path = out_dir.join(&cell.report.cdf_file);
        io::save_cdf(&cdf_path, &cell.published).map_err(write)?;
        io::save_json(io::sidecar_path(&cdf_path), &cell.sidecar).map_err(write)?;
        for (radius, cpd) in &cell.cpd_reports {
            let label = eps_label(cell.report.epsilon.expect("baseline has no cpd"));
            let path = out_dir.join(format!("cpd-eps-{label}-c-{radius}.csv"));
            io::save_cpd(&path, cpd).map_err(write)?;
            io::save_json(
                io::sidecar_path(&path),
                &io::CpdSidecar {
                    n: cpd.n,
                    trajectories: cpd.trajectories,
                    mean_correct: cpd.mean_correct,
                },
            )
            .map_err(write)?;
        }
    }

    let report = ExperimentReport {
        seed: config.seed,
        weighted: config.weighted,
        n_max: config.n_max,
        trajectories: originals.len(),
        baseline: baseline.report,
        cells: cells.into_iter().map(|c| c.report).collect(),
    };
    write_tables(out_dir, &report).map_err(|e| Error::stage("write", e))?;
    io::save_json(out_dir.join("summary.json"), &report).map_err(|e| Error::stage("write", e))?;
    Ok(report)
}
