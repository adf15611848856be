use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use pptpu::error::ErrorKind;
use pptpu::experiment::{self, SimulateConfig};
use pptpu::io::{self, Crs, TpuSidecar, TraceLoadOptions};
use pptpu::mapmatch::Matcher;
use pptpu::metrics;
use pptpu::sanitize::sanitize_dataset;
use pptpu::tracegen::SubsampleStrategy;
use pptpu::{tpu, Error, Result};

#[derive(Parser)]
#[command(name = "pptpu", version, about = "Privacy-preserving travel-time prediction pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic traces plus their network and route files.
    Simulate(SimulateArgs),
    /// Add planar Laplace noise to every record of a trace file.
    Sanitize(SanitizeArgs),
    /// Snap traces onto a road network and annotate route positions.
    Match(MatchArgs),
    /// Evaluate trajectories against a route and emit a travel-time CDF.
    Tpu(TpuArgs),
    /// Utility and adversary metrics.
    Metrics {
        #[command(subcommand)]
        metric: MetricCommand,
    },
    /// Run a whole configured experiment sweep.
    Run(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum CrsArg {
    Planar,
    Wgs84,
}

impl From<CrsArg> for Crs {
    fn from(v: CrsArg) -> Crs {
        match v {
            CrsArg::Planar => Crs::Planar,
            CrsArg::Wgs84 => Crs::Wgs84,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    EqualSpaced,
    Random,
}

impl From<StrategyArg> for SubsampleStrategy {
    fn from(v: StrategyArg) -> SubsampleStrategy {
        match v {
            StrategyArg::EqualSpaced => SubsampleStrategy::EqualSpaced,
            StrategyArg::Random => SubsampleStrategy::Random,
        }
    }
}

fn parse_origin(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lat, lon) = s.split_once(',').ok_or("expected lat,lon")?;
    let lat: f64 = lat.trim().parse().map_err(|_| format!("bad latitude {lat:?}"))?;
    let lon: f64 = lon.trim().parse().map_err(|_| format!("bad longitude {lon:?}"))?;
    Ok((lat, lon))
}

#[derive(clap::Args)]
struct SimulateArgs {
    /// 1 = single road, 2 = three parallel roads.
    #[arg(long)]
    experiment: u8,
    #[arg(long, default_value_t = 1000)]
    trips: usize,
    /// Mean trip speed, m/s.
    #[arg(long, default_value_t = 24.0)]
    mean: f64,
    /// Trip speed variance.
    #[arg(long, default_value_t = 8.0)]
    var: f64,
    /// Sampling period, seconds.
    #[arg(long, default_value_t = 20.0)]
    tau: f64,
    /// Records per trajectory.
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Road length, meters.
    #[arg(long)]
    length: Option<f64>,
    /// Parallel road spacing, meters.
    #[arg(long)]
    spacing: Option<f64>,
    /// Fraction of trips placed on non-route roads.
    #[arg(long, default_value_t = 0.0)]
    off_route_fraction: f64,
    #[arg(long)]
    seed: u64,
    /// Trace CSV to write.
    #[arg(long)]
    out: PathBuf,
    /// Network JSON to write.
    #[arg(long)]
    net_out: PathBuf,
    /// Route JSON to write.
    #[arg(long)]
    route_out: PathBuf,
}

#[derive(clap::Args)]
struct SanitizeArgs {
    /// Privacy budget per trajectory; each record gets eps_total / n_i.
    #[arg(long)]
    eps_total: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = CrsArg::Planar)]
    crs: CrsArg,
    /// Projection origin for wgs84 input, as "lat,lon".
    #[arg(long, value_parser = parse_origin)]
    origin: Option<(f64, f64)>,
    /// Subsample trajectories to this many records before sanitizing.
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long, value_enum, default_value_t = StrategyArg::EqualSpaced)]
    strategy: StrategyArg,
    /// Skip malformed rows instead of failing.
    #[arg(long)]
    lenient: bool,
}

#[derive(clap::Args)]
struct MatchArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    route: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = CrsArg::Planar)]
    crs: CrsArg,
    #[arg(long, value_parser = parse_origin)]
    origin: Option<(f64, f64)>,
    #[arg(long)]
    lenient: bool,
}

#[derive(clap::Args)]
struct TpuArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    route: PathBuf,
    /// Map-matched CSV from `pptpu match`.
    #[arg(long = "in")]
    input: PathBuf,
    /// Resample travel times by route-coverage weight.
    #[arg(long)]
    weighted: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CDF CSV to write; counts go to the .json sidecar.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum MetricCommand {
    /// Analytic probability that a sanitized location stays within alpha.
    Usefulness {
        /// Per-record budget.
        #[arg(long)]
        epsilon: f64,
        /// Radius, meters.
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo probability that a sanitized distance misses by >= alpha.
    DistUsefulness {
        /// Original distance, meters.
        #[arg(long)]
        d: f64,
        #[arg(long)]
        epsilon: f64,
        /// Relative error threshold.
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 1_000_000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo relative deviation moments of a sanitized distance.
    Deviation {
        #[arg(long)]
        d: f64,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 1_000_000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Average distance between paired original and sanitized datasets.
    Ad {
        #[arg(long)]
        orig: PathBuf,
        #[arg(long)]
        san: PathBuf,
        /// Inputs are map-matched CSVs; compare snapped positions.
        #[arg(long)]
        mapped: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Distribution of consecutively identified positions.
    Cpd {
        #[arg(long)]
        orig: PathBuf,
        #[arg(long)]
        san: PathBuf,
        /// Hit threshold C, meters.
        #[arg(long)]
        radius: f64,
        /// Inputs are map-matched CSVs; compare snapped positions.
        #[arg(long)]
        mapped: bool,
        #[arg(long)]
        out: PathBuf,
        /// Cross-check against the exact enumeration oracle (needs n <= 14).
        #[arg(long, requires = "eps_total")]
        oracle: bool,
        /// Per-trajectory budget the sanitized input was produced with;
        /// sets the oracle's analytic hit probability.
        #[arg(long)]
        eps_total: Option<f64>,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e.kind() {
                ErrorKind::Input => ExitCode::from(2),
                ErrorKind::Pipeline => ExitCode::from(3),
            }
        }
    }
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, content).map_err(|e| Error::io(path, e)),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate(args) => simulate(args),
        Command::Sanitize(args) => sanitize(args),
        Command::Match(args) => map_match(args),
        Command::Tpu(args) => run_tpu(args),
        Command::Metrics { metric } => run_metric(metric),
        Command::Run(args) => {
            let config = experiment::load_config(&args.config)?;
            let report = experiment::run_experiment(&config, &args.out_dir)?;
            let mut lines = format!(
                "epsilon=baseline K={} usable={} K_eff={}\n",
                report.baseline.k, report.baseline.usable_count, report.baseline.k_eff
            );
            for cell in &report.cells {
                lines += &format!(
                    "epsilon={} K={} usable={} K_eff={} ad_raw={} ad_mapped={}\n",
                    cell.epsilon.unwrap_or_default(),
                    cell.k,
                    cell.usable_count,
                    cell.k_eff,
                    cell.ad_raw.unwrap_or_default(),
                    cell.ad_mapped.unwrap_or_default(),
                );
            }
            print!("{lines}");
            Ok(())
        }
    }
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let config = SimulateConfig {
        experiment: args.experiment,
        trips: args.trips,
        mean: args.mean,
        var: args.var,
        tau: args.tau,
        n: args.n,
        length: args.length,
        spacing: args.spacing,
        off_route_fraction: args.off_route_fraction,
    };
    let (network, route, data) = config.build(args.seed)?;
    io::save_network(&args.net_out, &network)?;
    io::save_route(&args.route_out, &route)?;
    io::save_traces(&args.out, &data.trajectories)?;
    println!(
        "wrote {} trajectories ({} records clamped at road ends)",
        data.trajectories.len(),
        data.clamped_records
    );
    Ok(())
}

fn sanitize(args: SanitizeArgs) -> Result<()> {
    let opts = TraceLoadOptions {
        crs: args.crs.into(),
        origin: args.origin,
        n_max: args.n_max,
        strategy: args.strategy.into(),
        lenient: args.lenient,
        master_seed: args.seed,
    };
    let traces = io::load_traces(&args.input, &opts)?;
    let sanitized = sanitize_dataset(&traces, args.eps_total, args.seed)?;
    io::save_traces(&args.out, &sanitized)?;
    println!("sanitized {} trajectories at eps_total={}", sanitized.len(), args.eps_total);
    Ok(())
}

fn map_match(args: MatchArgs) -> Result<()> {
    let network = io::load_network(&args.network, args.origin)?;
    let route = io::load_route(&args.route, &network)?;
    let opts = TraceLoadOptions {
        crs: args.crs.into(),
        origin: args.origin,
        lenient: args.lenient,
        ..TraceLoadOptions::default()
    };
    let traces = io::load_traces(&args.input, &opts)?;
    let matcher = Matcher::with_route(&network, &route);
    let mapped = matcher.map_dataset(&traces);
    io::save_mapped(&args.out, &mapped)?;
    let on_route: usize = mapped
        .iter()
        .map(|t| t.records.iter().filter(|r| r.point.on_route).count())
        .sum();
    let total: usize = mapped.iter().map(|t| t.records.len()).sum();
    println!("mapped {} trajectories, {on_route}/{total} records on route", mapped.len());
    Ok(())
}

fn run_tpu(args: TpuArgs) -> Result<()> {
    let network = io::load_network(&args.network, None)?;
    let route = io::load_route(&args.route, &network)?;
    let mapped = io::load_mapped(&args.input)?;
    let summary = tpu::evaluate_dataset(&route, &mapped)?;
    let cdf = if args.weighted {
        let mut rng = pptpu::rng::stream(args.seed, "tpu", b"resample");
        summary.weighted_cdf(&mut rng)?
    } else {
        summary.unweighted_cdf()?
    };
    io::save_cdf(&args.out, &cdf)?;
    io::save_json(
        io::sidecar_path(&args.out),
        &TpuSidecar {
            k: summary.k_total,
            usable_count: summary.usable_count,
            k_eff: summary.k_eff,
        },
    )?;
    println!(
        "K={} usable={} K_eff={} samples={}",
        summary.k_total,
        summary.usable_count,
        summary.k_eff,
        cdf.len()
    );
    Ok(())
}

fn run_metric(metric: MetricCommand) -> Result<()> {
    match metric {
        MetricCommand::Usefulness { epsilon, alpha, out } => {
            if !(epsilon.is_finite() && epsilon > 0.0) {
                return Err(Error::InvalidEpsilon(epsilon));
            }
            if !(alpha.is_finite() && alpha >= 0.0) {
                return Err(Error::InvalidParameter(format!("alpha {alpha} must be >= 0")));
            }
            let p = metrics::usefulness_delta(epsilon, alpha);
            emit(&out, &format!("epsilon,alpha,usefulness\n{epsilon},{alpha},{p}\n"))
        }
        MetricCommand::DistUsefulness { d, epsilon, alpha, samples, seed, out } => {
            let mut rng = pptpu::rng::stream(seed, "metrics", b"dist-usefulness");
            let est = metrics::distance_usefulness(d, epsilon, alpha, samples, &mut rng)?;
            emit(
                &out,
                &format!(
                    "d,epsilon,alpha,samples,delta,std_error\n{d},{epsilon},{alpha},{samples},{},{}\n",
                    est.estimate, est.std_error
                ),
            )
        }
        MetricCommand::Deviation { d, epsilon, samples, seed, out } => {
            let mut rng = pptpu::rng::stream(seed, "metrics", b"deviation");
            let report = metrics::deviation_moments(d, epsilon, samples, &mut rng)?;
            emit(
                &out,
                &format!(
                    "d,epsilon,samples,expected_deviation,rmsd,squared_excess,closed_form_squared\n\
                     {d},{epsilon},{samples},{},{},{},{}\n",
                    report.expected.estimate,
                    report.rmsd(),
                    report.squared_excess.estimate,
                    report.closed_form_squared
                ),
            )
        }
        MetricCommand::Ad { orig, san, mapped, out } => {
            let ad = if mapped {
                metrics::average_distance_mapped(&io::load_mapped(&orig)?, &io::load_mapped(&san)?)?
            } else {
                let opts = TraceLoadOptions::default();
                metrics::average_distance(
                    &io::load_traces(&orig, &opts)?,
                    &io::load_traces(&san, &opts)?,
                )?
            };
            emit(&out, &format!("average_distance\n{ad}\n"))
        }
        MetricCommand::Cpd { orig, san, radius, mapped, out, oracle, eps_total } => {
            let report = if mapped {
                metrics::cpd_mapped(&io::load_mapped(&orig)?, &io::load_mapped(&san)?, radius)?
            } else {
                let opts = TraceLoadOptions::default();
                metrics::cpd(
                    &io::load_traces(&orig, &opts)?,
                    &io::load_traces(&san, &opts)?,
                    radius,
                )?
            };
            io::save_cpd(&out, &report)?;
            io::save_json(
                io::sidecar_path(&out),
                &io::CpdSidecar {
                    n: report.n,
                    trajectories: report.trajectories,
                    mean_correct: report.mean_correct,
                },
            )?;
            println!("n={} trajectories={} mean_correct={}", report.n, report.trajectories, report.mean_correct);
            if oracle {
                let eps_total = eps_total.expect("clap requires eps_total with oracle");
                let p = metrics::cpd_hit_probability(radius, eps_total, report.n);
                let exact = metrics::cpd_exact_oracle(report.n, p)?;
                let max_gap = report
                    .p
                    .iter()
                    .zip(&exact.p)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                println!("oracle hit_p={p} mean_correct={} max_p_gap={max_gap}", exact.mean_correct);
            }
            Ok(())
        }
    }
}
