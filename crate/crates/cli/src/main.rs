//! `unocc`: unified onboard occupancy from fare validations and passenger
//! counts.
//!
//! Every subcommand reads the five input tables from `--data` (default:
//! the output directory) and writes its artifacts to `--out`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use occupancy_core::config::ConfigError;
use occupancy_core::eval::{
    coverage_sweep, holdout_30, leave_line_out, write_eval_report, write_sweep, EvalContext,
    EVAL_REPORT_FILE, SWEEP_FILE,
};
use occupancy_core::fraudmap::{
    fraud_map, stations_geojson, write_fraud_map, write_stations_geojson, GridSpec, FRAUDMAP_FILE,
    STATIONS_GEOJSON_FILE,
};
use occupancy_core::ingest::{coverage_summary, NetworkPaths, REJECTS_FILE};
use occupancy_core::od::{TripSet, TRIPS_FILE};
use occupancy_core::synth::{generate, Scenario};
use occupancy_core::unify::{run_pipeline, PipelineOutput, OCCUPANCIES_FILE};
use occupancy_core::{load_network, Config, Error, LineId, NetworkDataset};

const SCHEMAS: &str = "\
Input files (CSV with header, in the data directory):
  stations.csv  station_id,name,lon,lat
  routes.csv    line_id,direction,seq,station_id
  courses.csv   course_id,line_id,direction,service_date,start_time
  afc.csv       card_id,timestamp,course_id,station_id
  apc.csv       course_id,seq,boardings,alightings,occupancy_after
direction is outbound|inbound and service_date YYYY-MM-DD. start_time and
timestamp are seconds since midnight of the service day. card_id may be
empty for anonymous tickets; empty apc fields mean the cell was silent.

Config file (key = value, # comments): schedule_match_window_s,
max_course_duration_s, walk_radius_m, rng_seed, min_courses,
direction_specific_rates, variogram_bins, variogram_max_dist_fraction,
grid_resolution, holdout_fraction, sweep_repeats, sweep_step,
sweep_min_coverage.

Exit status: 0 success, 1 data error, 2 usage error.";

#[derive(Parser, Debug)]
#[command(name = "unocc", version, about = "Unified onboard occupancy reconstruction", after_help = SCHEMAS)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// key = value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice; overrides the config and scenario seeds
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Directory holding the input tables [default: the output directory]
    #[arg(long, global = true)]
    data: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate the inputs, write the reject log and a coverage summary
    Ingest,
    /// Infer alightings and write trips.csv
    Reconstruct,
    /// Mean fraud rates per station and line
    Rates,
    /// Fit the variogram and kriging model on station rates
    Krige,
    /// Full pipeline: unified occupancy of every course
    Unify,
    /// Score reconstruction methods against held-out counts
    Evaluate {
        #[arg(long, value_enum)]
        protocol: Protocol,
    },
    /// Error as counted courses of one line are removed from training
    Sweep {
        #[arg(long)]
        line: String,
        /// Courses removed per step [default: from config]
        #[arg(long)]
        step: Option<usize>,
        /// Random removal orders [default: from config]
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Kriged fraud-rate grid and station markers
    Fraudmap {
        /// Cells per side [default: from config]
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Generate a synthetic network with ground truth
    Synth {
        #[arg(long)]
        scenario: PathBuf,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Protocol {
    Holdout30,
    Leavelineout,
}

/// Bad invocation input discovered after argument parsing.
#[derive(Debug)]
struct UsageError(anyhow::Error);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            if e.use_stderr() {
                eprintln!("\n{SCHEMAS}");
            }
            return ExitCode::from(code as u8);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e:#}\n\n{SCHEMAS}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn config(g: &Global) -> Result<Config> {
    let mut cfg = match &g.config {
        Some(path) => Config::from_file(path).map_err(|e: ConfigError| UsageError(e.into()))?,
        None => Config::default(),
    };
    if let Some(seed) = g.seed {
        cfg.rng_seed = seed;
    }
    Ok(cfg)
}

fn out_dir(g: &Global) -> Result<&Path> {
    std::fs::create_dir_all(&g.out).with_context(|| format!("creating {}", g.out.display()))?;
    Ok(&g.out)
}

fn load(g: &Global, cfg: &Config) -> Result<NetworkDataset> {
    let dir = g.data.as_deref().unwrap_or(&g.out);
    let (ds, report) = load_network(&NetworkPaths::in_dir(dir), cfg)
        .with_context(|| format!("loading network from {}", dir.display()))?;
    if !report.rejects.is_empty() {
        eprintln!("{} input rows rejected", report.rejects.len());
    }
    Ok(ds)
}

fn pipeline(g: &Global, cfg: &Config) -> Result<(NetworkDataset, PipelineOutput)> {
    let ds = load(g, cfg)?;
    let out = run_pipeline(&ds, cfg)?;
    Ok((ds, out))
}

fn run(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    let mut cfg = config(g)?;
    match &cli.command {
        Command::Ingest => {
            let dir = out_dir(g)?;
            cfg.reject_log_path = Some(dir.join(REJECTS_FILE));
            let ds = load(g, &cfg)?;
            println!("{} stations, {} courses, {} validations", ds.stations.len(), ds.courses.len(), ds.validations.len());
            println!("line\tdirection\tcourses\tcovered\tratio");
            for c in coverage_summary(&ds) {
                let flag = if c.kriging_only { "\tkriging only" } else { "" };
                println!("{}\t{}\t{}\t{}\t{:.3}{flag}", c.line_id, c.direction, c.n_courses, c.n_covered, c.ratio);
            }
        }
        Command::Reconstruct => {
            let ds = load(g, &cfg)?;
            let trips = TripSet::reconstruct(&ds, cfg.walk_radius_m, cfg.rng_seed);
            let dir = out_dir(g)?;
            trips.write_csv(&dir.join(TRIPS_FILE)).map_err(Error::from)?;
            let chained = trips.trips.iter().filter(|t| t.method.is_chained()).count();
            println!("{} trips, {chained} chained, {} fallback", trips.trips.len(), trips.trips.len() - chained);
        }
        Command::Rates => {
            let (_, out) = pipeline(g, &cfg)?;
            let dir = out_dir(g)?;
            out.write_trips(dir)?;
            out.write_rates(dir)?;
            println!("{} (station, line) rates from {} counted courses", out.table.len(), out.observations.len());
        }
        Command::Krige => {
            let (_, out) = pipeline(g, &cfg)?;
            let dir = out_dir(g)?;
            out.write_trips(dir)?;
            out.write_rates(dir)?;
            out.write_spatial_model(dir)?;
            let v = out.spatial.kriging.variogram();
            println!(
                "variogram ({:?}): nugget {:.5}, sill {:.5}, range {:.3} km over {} stations",
                out.spatial.origin,
                v.nugget,
                v.sill,
                v.range_km,
                out.station_points.len()
            );
        }
        Command::Unify => {
            let (_, out) = pipeline(g, &cfg)?;
            let dir = out_dir(g)?;
            out.write_dir(dir)?;
            let rows: usize = out.profiles.iter().map(|p| p.len()).sum();
            println!("{} courses, {rows} rows written to {}", out.profiles.len(), dir.join(OCCUPANCIES_FILE).display());
        }
        Command::Evaluate { protocol } => {
            let ds = load(g, &cfg)?;
            let ctx = EvalContext::new(&ds, &cfg)?;
            let rows = match protocol {
                Protocol::Holdout30 => holdout_30(&ctx, cfg.rng_seed)?.rows,
                Protocol::Leavelineout => leave_line_out(&ctx, None)?,
            };
            let dir = out_dir(g)?;
            write_eval_report(&dir.join(EVAL_REPORT_FILE), &rows)?;
            for r in rows.iter().filter(|r| r.scope == "all") {
                println!("{}\t{}\twMAPE {:.2}%\t{} courses", r.protocol, r.method.as_str(), 100.0 * r.wmape, r.n_courses);
            }
        }
        Command::Sweep { line, step, repeats } => {
            let ds = load(g, &cfg)?;
            let ctx = EvalContext::new(&ds, &cfg)?;
            let step = step.unwrap_or(cfg.sweep_step);
            let repeats = repeats.unwrap_or(cfg.sweep_repeats);
            if step == 0 || repeats == 0 {
                return Err(UsageError(anyhow::anyhow!("--step and --repeats must be positive")).into());
            }
            let points = coverage_sweep(&ctx, &LineId::new(line.as_str()), step, repeats, cfg.rng_seed)?;
            let dir = out_dir(g)?;
            write_sweep(&dir.join(SWEEP_FILE), &points)?;
            println!("{} points written to {}", points.len(), dir.join(SWEEP_FILE).display());
        }
        Command::Fraudmap { resolution } => {
            let (ds, out) = pipeline(g, &cfg)?;
            let grid = GridSpec::around(ds.stations.values(), resolution.unwrap_or(cfg.grid_resolution));
            let cells = fraud_map(&out.spatial.kriging, &out.geometry.projection, &grid);
            let dir = out_dir(g)?;
            write_fraud_map(&dir.join(FRAUDMAP_FILE), &cells)?;
            write_stations_geojson(&dir.join(STATIONS_GEOJSON_FILE), &stations_geojson(&ds, &out.table, &out.kriged_rates))?;
            println!("{}x{} grid written to {}", grid.nx, grid.ny, dir.join(FRAUDMAP_FILE).display());
        }
        Command::Synth { scenario } => {
            let mut s = Scenario::from_file(scenario).map_err(|e| match e {
                Error::InvalidScenario(_) => anyhow::Error::new(UsageError(e.into())),
                e => e.into(),
            })?;
            if let Some(seed) = g.seed {
                s.seed = seed;
            }
            let net = generate(&s)?;
            let dir = out_dir(g)?;
            net.write_dir(dir)?;
            println!(
                "{} courses, {} validations, {} counted courses written to {}",
                net.raw.courses.len(),
                net.raw.afc.len(),
                net.raw.apc.iter().map(|(_, r)| &r.course_id).collect::<std::collections::BTreeSet<_>>().len(),
                dir.display()
            );
        }
    }
    Ok(())
}
