//! `phasecal`: runs the calibration experiments and writes CSV/JSON results.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use phasecal_core::experiment::{run_calibrate_sweep, run_eirp_cdf, run_instance, run_rev_compare};
use phasecal_core::export::{
    write_cdf, write_estimate, write_json, write_records, write_rev, write_rows, write_sidecar,
    write_trace,
};
use phasecal_core::{Experiment, RefineSettings, RevSettings, RunConfig, TruthConfig};

const VERSION: &str = env!("PHASECAL_VERSION");

#[derive(Parser)]
#[command(name = "phasecal", version = VERSION, about = "Phased-array calibration experiments")]
struct Cli {
    /// Log more (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Phase and gain errors against SNR, before and after refinement
    CalibrateSweep(RunArgs),
    /// Refined calibration against the REV baseline (per-antenna errors)
    RevCompare(RunArgs),
    /// Coverage CDFs of uncalibrated and calibrated codebooks
    EirpCdf(RunArgs),
    /// Calibrate a single array and dump measurements, estimates and trace
    Instance(InstanceArgs),
    /// Print the default configuration for an experiment
    DefaultConfig {
        #[arg(value_parser = parse_experiment)]
        experiment: Experiment,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; defaults apply when omitted
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Comma-separated SNRs in dB; `inf` for noiseless
    #[arg(long, value_delimiter = ',', value_parser = parse_snr)]
    snr: Option<Vec<f64>>,
    /// Monte Carlo iterations (error instances for eirp-cdf)
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InstanceArgs {
    /// JSON with n_antennas, q_bits, error ranges, phase_dependent and seed
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "inf", value_parser = parse_snr)]
    snr: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn parse_snr(s: &str) -> Result<f64, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
        t => match t.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(format!("not an SNR in dB: {s:?}")),
        },
    }
}

fn parse_experiment(s: &str) -> Result<Experiment, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| {
        format!("unknown experiment {s:?}; expected calibrate-sweep, rev-compare or eirp-cdf")
    })
}

fn load_run_config(experiment: Experiment, args: &RunArgs) -> Result<RunConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let c: RunConfig = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", path.display()))?;
            if c.experiment != experiment {
                bail!(
                    "{} is a {} config, not {}",
                    path.display(),
                    c.experiment,
                    experiment
                );
            }
            c
        }
        None => RunConfig::new(experiment),
    };
    if let Some(snr) = &args.snr {
        config.snr_list_db = snr.clone();
    }
    if let Some(n) = args.iters {
        config.iterations = n;
    }
    if let Some(s) = args.seed {
        config.master_seed = s;
    }
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn snr_label(snr: f64) -> String {
    if snr.is_finite() {
        format!("{snr}db")
    } else {
        "inf".into()
    }
}

fn run_experiment(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let dir = &config.output_dir;
    prepare_dir(dir)?;
    let mut written = Vec::new();
    let mut emit =
        |path: PathBuf, write: &dyn Fn(&Path) -> phasecal_core::Result<()>| -> Result<()> {
            write(&path)?;
            write_sidecar(&path, config, VERSION)?;
            written.push(path);
            Ok(())
        };
    match config.experiment {
        Experiment::CalibrateSweep => {
            let rows = run_calibrate_sweep(config)?;
            emit(dir.join("sweep.csv"), &|p| write_rows(p, &rows, None))?;
        }
        Experiment::RevCompare => {
            let rows = run_rev_compare(config)?;
            emit(dir.join("rev_compare.csv"), &|p| write_rows(p, &rows, None))?;
        }
        Experiment::EirpCdf => {
            let study = run_eirp_cdf(config)?;
            emit(dir.join("cdf_uncalibrated.csv"), &|p| {
                write_cdf(p, &study.uncalibrated)
            })?;
            for c in &study.calibrated {
                let name = format!("cdf_calibrated_{}.csv", snr_label(c.snr_db));
                emit(dir.join(name), &|p| write_cdf(p, &c.report))?;
            }
            let summary = study.summary();
            emit(dir.join("percentiles.json"), &|p| write_json(p, &summary))?;
        }
    }
    Ok(written)
}

fn run_single(args: &InstanceArgs) -> Result<Vec<PathBuf>> {
    let mut truth = match &args.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<TruthConfig>(&text)
                .with_context(|| format!("parsing {}", path.display()))?
        }
        None => TruthConfig::default(),
    };
    if let Some(s) = args.seed {
        truth.seed = s;
    }
    truth.array.validate()?;
    truth.errors.validate()?;
    let run = run_instance(
        &truth,
        args.snr,
        &RefineSettings::default(),
        &RevSettings::default(),
    )?;
    prepare_dir(&args.out)?;

    let echo = serde_json::json!({ "truth": truth, "snr_db": if args.snr.is_finite() { args.snr.to_string() } else { "inf".into() } });
    let mut written = Vec::new();
    let mut emit = |name: &str, write: &dyn Fn(&Path) -> phasecal_core::Result<()>| -> Result<()> {
        let path = args.out.join(name);
        write(&path)?;
        write_sidecar(&path, &echo, VERSION)?;
        written.push(path);
        Ok(())
    };
    emit("records.csv", &|p| write_records(p, &run.records))?;
    emit("estimate.csv", &|p| write_estimate(p, &run.estimate))?;
    emit("refined_estimate.csv", &|p| {
        write_estimate(p, &run.refined.estimate)
    })?;
    emit("trace.csv", &|p| write_trace(p, &run.refined.trace))?;
    if let Some(rev) = &run.rev {
        emit("rev.csv", &|p| write_rev(p, rev))?;
    }
    let summary = serde_json::json!({
        "measurements": run.records.len(),
        "references": { "r1": run.estimate.refs.r1, "r2": run.estimate.refs.r2, "r3": run.estimate.refs.r3 },
        "weak_sign_warnings": run.estimate.warnings.len(),
        "errors": run.errors,
        "errors_opt": run.errors_opt,
        "refine_converged": run.refined.converged,
        "refine_iterations": run.refined.iterations,
        "objective_initial": run.refined.initial_objective,
        "objective_final": run.refined.final_objective,
    });
    emit("summary.json", &|p| write_json(p, &summary))?;
    info!(
        "phase error {:.3e} rad raw, {:.3e} rad refined",
        run.errors.err_avg_rad, run.errors_opt.err_avg_rad
    );
    Ok(written)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let written = match &cli.command {
        Command::CalibrateSweep(a) => {
            run_experiment(&load_run_config(Experiment::CalibrateSweep, a)?)?
        }
        Command::RevCompare(a) => run_experiment(&load_run_config(Experiment::RevCompare, a)?)?,
        Command::EirpCdf(a) => run_experiment(&load_run_config(Experiment::EirpCdf, a)?)?,
        Command::Instance(a) => run_single(a)?,
        Command::DefaultConfig { experiment } => {
            println!(
                "{}",
                serde_json::to_string_pretty(&RunConfig::new(*experiment))?
            );
            return Ok(());
        }
    };
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}
