//! Command-line front end: `analyze` (frequency-domain stability grid),
//! `simulate` (single nonlinear run), `sweep` (seed-averaged metrics grid).

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use mixtraffic::composition::{Strategy, VehicleClass};
use mixtraffic::config::{OutputFormat, RunConfig};
use mixtraffic::error::Error;
use mixtraffic::frequency::{stability_from_mags, SegmentMags, STABILITY_TOL};
use mixtraffic::metrics;
use mixtraffic::output::{fmt_sig, write_json, Table};
use mixtraffic::sim::Simulation;

const OUT_ENV: &str = "MIXTRAFFIC_OUT";

type CommandFn = fn(&RunConfig, &Path, OutputFormat) -> mixtraffic::Result<()>;

#[derive(Parser)]
#[command(name = "mixtraffic", version, about = "Mixed CAV/HDV traffic analysis toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Frequency-domain string-stability analysis over the scenario grid
    Analyze(CommonArgs),
    /// One nonlinear perturbation simulation with trajectory export
    Simulate(CommonArgs),
    /// Seed-averaged SD/MAD metrics over the scenario grid
    Sweep(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Config file (TOML); built-in defaults when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted-path overrides, e.g. --set traffic.n_sim=50
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (also settable via MIXTRAFFIC_OUT)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Table format: csv or json
    #[arg(long)]
    format: Option<String>,
    /// Seed list override, e.g. --seeds 1,2,3
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

fn main() {
    let cli = Cli::parse();
    let (args, run): (&CommonArgs, CommandFn) = match &cli.command {
        Command::Analyze(a) => (a, cmd_analyze),
        Command::Simulate(a) => (a, cmd_simulate),
        Command::Sweep(a) => (a, cmd_sweep),
    };
    let code = match setup(args).and_then(|(cfg, dir, fmt)| run(&cfg, &dir, fmt)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    };
    std::process::exit(code);
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidInput(_) => 2,
        Error::Synthesis(_) => 3,
        Error::Collision { .. } => 4,
        _ => 1,
    }
}

fn setup(args: &CommonArgs) -> mixtraffic::Result<(RunConfig, PathBuf, OutputFormat)> {
    let mut cfg = RunConfig::load(args.config.as_deref(), &args.set)?;
    if let Some(seeds) = &args.seeds {
        if seeds.is_empty() {
            return Err(Error::Config("--seeds list must not be empty".into()));
        }
        cfg.simulation.seeds = seeds.clone();
    }
    let format = match args.format.as_deref() {
        None => cfg.output.format,
        Some("csv") => OutputFormat::Csv,
        Some("json") => OutputFormat::Json,
        Some(other) => {
            return Err(Error::Config(format!(
                "unknown format `{other}` (expected csv or json)"
            )))
        }
    };
    let dir = args
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    std::fs::create_dir_all(&dir)?;
    Ok((cfg, dir, format))
}

/// Scenario grid in deterministic output order (strategy name, M, p).
fn grid_cells(cfg: &RunConfig) -> Vec<(Strategy, usize)> {
    let mut strategies = cfg.scenarios.strategies.clone();
    strategies.sort_by_key(|s| s.name());
    strategies.dedup();
    let mut sizes = cfg.scenarios.platoon_sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();
    strategies
        .iter()
        .flat_map(|&s| sizes.iter().map(move |&m| (s, m)))
        .collect()
}

fn sorted_penetrations(cfg: &RunConfig) -> Vec<f64> {
    let mut ps = cfg.scenarios.penetrations.clone();
    ps.sort_by(f64::total_cmp);
    ps.dedup();
    ps
}

#[derive(Serialize)]
struct VerdictRecord {
    strategy: &'static str,
    m: usize,
    p: f64,
    peak_l: f64,
    argmax_omega: f64,
    stable: bool,
    probabilities: mixtraffic::composition::SegmentProbabilities,
}

#[derive(Serialize)]
struct VerdictFile {
    config: String,
    tolerance: f64,
    records: Vec<VerdictRecord>,
}

fn cmd_analyze(cfg: &RunConfig, dir: &Path, format: OutputFormat) -> mixtraffic::Result<()> {
    let grid = cfg.grid()?;
    let meta = cfg.to_toml_string();
    let cells = grid_cells(cfg);
    let ps = sorted_penetrations(cfg);

    // gain synthesis and transfer evaluation are shared across p
    let mags: Vec<SegmentMags> = cells
        .par_iter()
        .map(|&(strategy, m)| SegmentMags::compute(&cfg.scenario(strategy, 0.0, m), &grid))
        .collect::<mixtraffic::Result<_>>()?;

    let mut records = Vec::new();
    for ((strategy, m), cell_mags) in cells.iter().zip(&mags) {
        for &p in &ps {
            let report = stability_from_mags(cell_mags, p, *m, cfg.traffic.n_analysis);
            let mut header = vec!["omega".to_string(), "l".to_string()];
            header.push("mag_hdv".into());
            header.push("mag_cav".into());
            for (size, _) in &cell_mags.platoon {
                header.push(format!("mag_platoon_{size}"));
            }
            let mut table = Table::new(header);
            for (i, &omega) in cell_mags.omegas.iter().enumerate() {
                let mut row = vec![fmt_sig(omega), fmt_sig(report.l[i])];
                row.push(fmt_sig(cell_mags.hdv[i]));
                row.push(fmt_sig(cell_mags.cav[i]));
                for (_, v) in &cell_mags.platoon {
                    row.push(fmt_sig(v[i]));
                }
                table.push(row);
            }
            let stem = format!(
                "bode_{}_m{}_p{}",
                strategy.name(),
                m,
                (p * 100.0).round() as u32
            );
            table.write(dir, &stem, format, &meta, None)?;
            records.push(VerdictRecord {
                strategy: strategy.name(),
                m: *m,
                p,
                peak_l: report.peak,
                argmax_omega: report.argmax_omega,
                stable: report.stable,
                probabilities: report.probs,
            });
        }
    }
    write_json(
        dir,
        "verdicts.json",
        &VerdictFile {
            config: meta,
            tolerance: STABILITY_TOL,
            records,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct MetricsFile {
    config: String,
    strategy: &'static str,
    m: usize,
    p: f64,
    seed: u64,
    sd: f64,
    mad: f64,
    sd_normalized: f64,
    mad_normalized: f64,
    peak_deviation: Vec<f64>,
}

fn cmd_simulate(cfg: &RunConfig, dir: &Path, format: OutputFormat) -> mixtraffic::Result<()> {
    let sel = &cfg.simulate;
    // the seed list drives sweep aggregation; a single run is pinned by
    // simulate.seed (override with --set simulate.seed=...)
    let seed = sel.seed;
    let sim_cfg = cfg.sim_config(sel.strategy, sel.p, sel.m_max, seed);
    let mut sim = Simulation::new(sim_cfg)?;
    let run_result = sim.run_to_end();
    let traj = sim.trajectory();
    let meta = cfg.to_toml_string();

    let mut table = Table::new([
        "t",
        "vehicle_id",
        "class",
        "position",
        "velocity",
        "acceleration",
    ]);
    for (k, &t) in traj.times.iter().enumerate() {
        for i in 1..=traj.n_vehicles() {
            table.push(vec![
                fmt_sig(t),
                i.to_string(),
                match traj.classes[i - 1] {
                    VehicleClass::Cav => "cav".to_string(),
                    VehicleClass::Hdv => "hdv".to_string(),
                },
                fmt_sig(traj.positions[k][i]),
                fmt_sig(traj.velocities[k][i]),
                // on a collision abort the final sample has no acceleration
                fmt_sig(traj.accelerations.get(k).map_or(f64::NAN, |a| a[i])),
            ]);
        }
    }
    let trailer = traj.collision.map(|c| {
        format!(
            "aborted: collision at t={}, vehicle={}",
            fmt_sig(c.time),
            c.vehicle
        )
    });
    table.write(dir, "trajectory", format, &meta, trailer.as_deref())?;

    run_result?;
    let report = metrics::report(traj)?;
    write_json(
        dir,
        "metrics.json",
        &MetricsFile {
            config: meta,
            strategy: sel.strategy.name(),
            m: sel.m_max,
            p: sel.p,
            seed,
            sd: report.sd,
            mad: report.mad,
            sd_normalized: report.sd_normalized,
            mad_normalized: report.mad_normalized,
            peak_deviation: report.peak_deviation,
        },
    )?;
    Ok(())
}

fn cmd_sweep(cfg: &RunConfig, dir: &Path, format: OutputFormat) -> mixtraffic::Result<()> {
    let meta = cfg.to_toml_string();
    let seeds = cfg.simulation.seeds.clone();
    let cells = grid_cells(cfg);
    let ps = sorted_penetrations(cfg);
    let jobs: Vec<(Strategy, usize, f64)> = cells
        .iter()
        .flat_map(|&(s, m)| ps.iter().map(move |&p| (s, m, p)))
        .collect();

    struct CellResult {
        sd: Vec<f64>,
        mad: Vec<f64>,
        failures: usize,
    }
    let results: Vec<CellResult> = jobs
        .par_iter()
        .map(|&(strategy, m, p)| {
            let mut cell = CellResult {
                sd: Vec::new(),
                mad: Vec::new(),
                failures: 0,
            };
            for &seed in &seeds {
                let run = mixtraffic::sim::run(&cfg.sim_config(strategy, p, m, seed))
                    .and_then(|t| metrics::report(&t));
                match run {
                    Ok(rep) => {
                        cell.sd.push(rep.sd);
                        cell.mad.push(rep.mad);
                    }
                    Err(_) => cell.failures += 1,
                }
            }
            cell
        })
        .collect();

    let stats = |v: &[f64]| {
        if v.is_empty() {
            return ("".to_string(), "".to_string(), "".to_string());
        }
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (fmt_sig(mean), fmt_sig(min), fmt_sig(max))
    };
    let mut table = Table::new([
        "strategy", "m", "p", "seeds", "failures", "sd_mean", "sd_min", "sd_max", "mad_mean",
        "mad_min", "mad_max",
    ]);
    for (&(strategy, m, p), cell) in jobs.iter().zip(&results) {
        let (sd_mean, sd_min, sd_max) = stats(&cell.sd);
        let (mad_mean, mad_min, mad_max) = stats(&cell.mad);
        table.push(vec![
            strategy.name().to_string(),
            m.to_string(),
            fmt_sig(p),
            seeds.len().to_string(),
            cell.failures.to_string(),
            sd_mean,
            sd_min,
            sd_max,
            mad_mean,
            mad_min,
            mad_max,
        ]);
    }
    table.write(dir, "sweep", format, &meta, None)?;
    Ok(())
}
