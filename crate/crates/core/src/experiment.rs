//! Monte Carlo drivers for the SNR sweep, the REV comparison and the EIRP
//! coverage study.
//!
//! Truths are keyed by `(master_seed, iteration)` and noise by
//! `(master_seed, snr index, iteration)`, so every SNR sees the same arrays
//! and results do not depend on the number of worker threads.

use std::path::PathBuf;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::array::{generate_ground_truth, ArrayConfig, ErrorSpec, GroundTruth, TruthConfig};
use crate::calibrate::{calibrate_simulated, CalibrationEstimate, References};
use crate::eirp::{
    calibrated_codebook, coverage_db, eirp_scale, sphere_directions, uncalibrated_codebook,
    EirpReport, DEFAULT_DIRECTIONS_DEG,
};
use crate::error::{Error, Result};
use crate::measurement::{plan_size, MeasurementRecord, NoiseModel};
use crate::metrics::{aggregate, ErrorStats, InstanceErrors};
use crate::refine::{refine, RefineOutcome, RefineSettings};
use crate::rev::{rev_calibrate, RevResult, RevSettings};
use crate::rng::{derive_seed, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    CalibrateSweep,
    RevCompare,
    EirpCdf,
}

impl std::fmt::Display for Experiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Experiment::CalibrateSweep => "calibrate-sweep",
            Experiment::RevCompare => "rev-compare",
            Experiment::EirpCdf => "eirp-cdf",
        })
    }
}

/// SNR list entries: numbers, or `"inf"` / `null` for the noiseless channel.
mod snr_list {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Entry {
        Number(f64),
        Text(String),
        Null(()),
    }

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
        let entries: Vec<Entry> = v
            .iter()
            .map(|&x| {
                if x.is_finite() {
                    Entry::Number(x)
                } else {
                    Entry::Text("inf".into())
                }
            })
            .collect();
        entries.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
        let entries = Vec::<Entry>::deserialize(d)?;
        entries
            .into_iter()
            .map(|e| match e {
                Entry::Number(x) => Ok(x),
                Entry::Null(()) => Ok(f64::INFINITY),
                Entry::Text(t) => match t.to_ascii_lowercase().as_str() {
                    "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
                    other => other
                        .parse()
                        .map_err(|_| serde::de::Error::custom(format!("bad SNR entry {t:?}"))),
                },
            })
            .collect()
    }
}

fn default_snrs() -> Vec<f64> {
    vec![10.0, 20.0, 30.0, 40.0]
}
fn default_iterations() -> usize {
    1000
}
fn default_sphere_samples() -> usize {
    1000
}
fn default_directions() -> Vec<f64> {
    DEFAULT_DIRECTIONS_DEG.to_vec()
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub array: ArrayConfig,
    #[serde(default)]
    pub errors: ErrorSpec,
    #[serde(default = "default_snrs", with = "snr_list")]
    pub snr_list_db: Vec<f64>,
    /// Monte Carlo iterations per SNR; error instances for the EIRP study.
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub refine: RefineSettings,
    #[serde(default)]
    pub rev: RevSettings,
    #[serde(default = "default_sphere_samples")]
    pub sphere_samples: usize,
    #[serde(default = "default_directions")]
    pub directions_deg: Vec<f64>,
}

impl RunConfig {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            array: ArrayConfig::default(),
            errors: ErrorSpec::default(),
            snr_list_db: default_snrs(),
            iterations: default_iterations(),
            master_seed: 0,
            output_dir: default_output_dir(),
            refine: RefineSettings::default(),
            rev: RevSettings::default(),
            sphere_samples: default_sphere_samples(),
            directions_deg: default_directions(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.array.validate()?;
        self.errors.validate()?;
        self.refine.validate()?;
        if self.snr_list_db.is_empty() {
            return Err(Error::Config("snr_list_db is empty".into()));
        }
        if self
            .snr_list_db
            .iter()
            .any(|s| s.is_nan() || *s == f64::NEG_INFINITY)
        {
            return Err(Error::Config(
                "snr_list_db entries must be numbers or inf".into(),
            ));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.rev.iterations == 0 {
            return Err(Error::Config("rev.iterations must be at least 1".into()));
        }
        if self.directions_deg.is_empty()
            || self
                .directions_deg
                .iter()
                .any(|d| d.is_nan() || d.abs() > 90.0)
        {
            return Err(Error::Config(
                "directions_deg must be non-empty and within [-90, 90]".into(),
            ));
        }
        if self.experiment == Experiment::EirpCdf && self.sphere_samples < 100 {
            return Err(Error::Config("sphere_samples must be at least 100".into()));
        }
        Ok(())
    }

    fn truth(&self, iteration: usize) -> Result<GroundTruth> {
        generate_ground_truth(
            self.array,
            &self.errors,
            derive_seed(self.master_seed, &[tag::TRUTH, iteration as u64]),
        )
    }

    fn noise(&self, stream: u64, snr_index: usize, iteration: usize) -> NoiseModel {
        NoiseModel::new(
            self.snr_list_db[snr_index],
            derive_seed(
                self.master_seed,
                &[stream, snr_index as u64, iteration as u64],
            ),
        )
    }

    fn jobs(&self) -> Vec<(usize, usize)> {
        (0..self.snr_list_db.len())
            .flat_map(|s| (0..self.iterations).map(move |it| (s, it)))
            .collect()
    }
}

/// Calibration followed by refinement on one noisy instance.
fn calibrate_and_refine(
    gt: &GroundTruth,
    noise: &NoiseModel,
    settings: &RefineSettings,
) -> Result<(CalibrationEstimate, CalibrationEstimate)> {
    let (est, records) = calibrate_simulated(gt, noise)?;
    let refined = refine(&est, &records, settings)?.estimate;
    Ok((est, refined))
}

/// Errors of the raw and refined estimates for one instance.
struct SweepSample {
    raw: InstanceErrors,
    opt: InstanceErrors,
    weak_sign: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub snr_db: f64,
    pub err_max: f64,
    pub err_avg: f64,
    pub err_max_opt: f64,
    pub err_avg_opt: f64,
    pub gain_err_max_db: f64,
    pub gain_err_avg_db: f64,
    pub gain_err_max_opt_db: f64,
    pub gain_err_avg_opt_db: f64,
    pub measurements: usize,
    pub failures: usize,
    pub weak_sign_warnings: usize,
}

fn group_by_snr<T>(config: &RunConfig, results: Vec<T>) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = (0..config.snr_list_db.len()).map(|_| Vec::new()).collect();
    for (i, r) in results.into_iter().enumerate() {
        out[i / config.iterations].push(r);
    }
    out
}

fn stats_or_nan(errs: &[InstanceErrors]) -> Result<ErrorStats> {
    match aggregate(errs, true) {
        Err(Error::EmptyInput) => Ok(ErrorStats {
            err_max_rad: f64::NAN,
            err_avg_rad: f64::NAN,
            gain_err_max_db: f64::NAN,
            gain_err_avg_db: f64::NAN,
        }),
        other => other,
    }
}

/// Phase and gain error of the calibration, before and after refinement,
/// per SNR.
pub fn run_calibrate_sweep(config: &RunConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let results: Vec<Result<Option<SweepSample>>> = config
        .jobs()
        .into_par_iter()
        .map(|(s, it)| {
            let gt = config.truth(it)?;
            let noise = config.noise(tag::NOISE, s, it);
            match calibrate_and_refine(&gt, &noise, &config.refine) {
                Ok((raw, opt)) => Ok(Some(SweepSample {
                    raw: InstanceErrors::from_estimate(&gt, &raw)?,
                    opt: InstanceErrors::from_estimate(&gt, &opt)?,
                    weak_sign: !raw.warnings.is_empty(),
                })),
                Err(Error::ReferenceDegeneracy { .. } | Error::DegeneratePower { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for (s, group) in group_by_snr(config, results).into_iter().enumerate() {
        let failures = group.iter().filter(|g| g.is_none()).count();
        let ok: Vec<SweepSample> = group.into_iter().flatten().collect();
        if failures > 0 {
            warn!(
                "{failures} calibration failures at {} dB",
                config.snr_list_db[s]
            );
        }
        let raw: Vec<InstanceErrors> = ok.iter().map(|x| x.raw.clone()).collect();
        let opt: Vec<InstanceErrors> = ok.iter().map(|x| x.opt.clone()).collect();
        let (a, b) = (stats_or_nan(&raw)?, stats_or_nan(&opt)?);
        let row = SweepRow {
            snr_db: config.snr_list_db[s],
            err_max: a.err_max_rad,
            err_avg: a.err_avg_rad,
            err_max_opt: b.err_max_rad,
            err_avg_opt: b.err_avg_rad,
            gain_err_max_db: a.gain_err_max_db,
            gain_err_avg_db: a.gain_err_avg_db,
            gain_err_max_opt_db: b.gain_err_max_db,
            gain_err_avg_opt_db: b.gain_err_avg_db,
            measurements: plan_size(&config.array),
            failures,
            weak_sign_warnings: ok.iter().filter(|x| x.weak_sign).count(),
        };
        info!(
            "calibrate-sweep {} dB: err_avg {:.4} err_avg_opt {:.4}",
            row.snr_db, row.err_avg, row.err_avg_opt
        );
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RevCompareRow {
    pub snr_db: f64,
    pub err_max_opt: f64,
    pub err_avg_opt: f64,
    pub err_max_rev: f64,
    pub err_avg_rev: f64,
    pub gain_err_max_opt_db: f64,
    pub gain_err_avg_opt_db: f64,
    pub gain_err_max_rev_db: f64,
    pub gain_err_avg_rev_db: f64,
    pub measurements_opt: usize,
    pub measurements_rev: usize,
    pub failures_opt: usize,
    pub failures_rev: usize,
}

/// Expands REV's per-antenna offsets and amplitudes to every setting.
fn rev_as_estimate(
    config: &ArrayConfig,
    offset: &[f64],
    amplitude: &[f64],
) -> Result<CalibrationEstimate> {
    let n_k = config.n_phases();
    let step = config.phase_step();
    let mut b = Vec::with_capacity(config.n_elements());
    let mut phi = Vec::with_capacity(config.n_elements());
    for i in 0..config.n_antennas {
        for k in 0..n_k {
            b.push(amplitude[i]);
            phi.push(offset[i] + k as f64 * step);
        }
    }
    CalibrationEstimate::from_parts(
        *config,
        b,
        phi,
        References {
            r1: 0,
            r2: 0,
            r3: 0,
        },
    )
}

/// Refined calibration against REV on arrays with per-antenna errors only.
pub fn run_rev_compare(config: &RunConfig) -> Result<Vec<RevCompareRow>> {
    let mut config = config.clone();
    if config.errors.phase_dependent {
        info!("rev-compare: phase-dependent errors switched off");
        config.errors = config.errors.per_antenna();
    }
    config.validate()?;
    let config = &config;
    type Pair = (Option<InstanceErrors>, Option<InstanceErrors>);
    let results: Vec<Result<Pair>> = config
        .jobs()
        .into_par_iter()
        .map(|(s, it)| {
            let gt = config.truth(it)?;
            let ours =
                match calibrate_and_refine(&gt, &config.noise(tag::NOISE, s, it), &config.refine) {
                    Ok((_, opt)) => Some(InstanceErrors::from_estimate(&gt, &opt)?),
                    Err(Error::ReferenceDegeneracy { .. } | Error::DegeneratePower { .. }) => None,
                    Err(e) => return Err(e),
                };
            let r = rev_calibrate(&gt, &config.noise(tag::REV_NOISE, s, it), &config.rev)?;
            let theirs = if r.failures.is_empty() {
                let est = rev_as_estimate(&config.array, &r.offset, &r.amplitude)?;
                Some(InstanceErrors::from_estimate(&gt, &est)?)
            } else {
                None
            };
            Ok((ours, theirs))
        })
        .collect();
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;

    let rev_count = config.rev.iterations * config.array.n_antennas * config.array.n_phases();
    let mut rows = Vec::new();
    for (s, group) in group_by_snr(config, results).into_iter().enumerate() {
        let failures_opt = group.iter().filter(|g| g.0.is_none()).count();
        let failures_rev = group.iter().filter(|g| g.1.is_none()).count();
        let (ours, theirs): (Vec<_>, Vec<_>) = group.into_iter().unzip();
        let a = stats_or_nan(&ours.into_iter().flatten().collect::<Vec<_>>())?;
        let b = stats_or_nan(&theirs.into_iter().flatten().collect::<Vec<_>>())?;
        let row = RevCompareRow {
            snr_db: config.snr_list_db[s],
            err_max_opt: a.err_max_rad,
            err_avg_opt: a.err_avg_rad,
            err_max_rev: b.err_max_rad,
            err_avg_rev: b.err_avg_rad,
            gain_err_max_opt_db: a.gain_err_max_db,
            gain_err_avg_opt_db: a.gain_err_avg_db,
            gain_err_max_rev_db: b.gain_err_max_db,
            gain_err_avg_rev_db: b.gain_err_avg_db,
            measurements_opt: plan_size(&config.array),
            measurements_rev: rev_count,
            failures_opt,
            failures_rev,
        };
        info!(
            "rev-compare {} dB: ours {:.4} rad / REV {:.4} rad, {} vs {} measurements",
            row.snr_db,
            row.err_avg_opt,
            row.err_avg_rev,
            row.measurements_opt,
            row.measurements_rev
        );
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedEirp {
    pub snr_db: f64,
    pub report: EirpReport,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EirpStudy {
    pub uncalibrated: EirpReport,
    pub calibrated: Vec<CalibratedEirp>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileSummary {
    pub codebook: String,
    pub snr_db: Option<f64>,
    pub p50_db: f64,
    pub p99_db: f64,
    pub p50_delta_db: f64,
    pub p99_delta_db: f64,
}

impl EirpStudy {
    pub fn summary(&self) -> Vec<PercentileSummary> {
        let base = &self.uncalibrated;
        let mut out = vec![PercentileSummary {
            codebook: "uncalibrated".into(),
            snr_db: None,
            p50_db: base.p50_db,
            p99_db: base.p99_db,
            p50_delta_db: 0.0,
            p99_delta_db: 0.0,
        }];
        out.extend(self.calibrated.iter().map(|c| PercentileSummary {
            codebook: "calibrated".into(),
            snr_db: Some(c.snr_db),
            p50_db: c.report.p50_db,
            p99_db: c.report.p99_db,
            p50_delta_db: c.report.p50_db - base.p50_db,
            p99_delta_db: c.report.p99_db - base.p99_db,
        }));
        out
    }
}

/// Coverage CDFs of the error-free codebook and of codebooks designed on
/// refined estimates at each SNR, all evaluated on the true arrays.
///
/// An instance whose calibration fails at some SNR falls back to the
/// uncalibrated codebook there, so every CDF pools the same instances.
pub fn run_eirp_cdf(config: &RunConfig) -> Result<EirpStudy> {
    config.validate()?;
    let thetas = sphere_directions(config.sphere_samples)?;
    let scale = eirp_scale(&config.array, config.errors.max_amplitude());
    let base_book = uncalibrated_codebook(&config.array, &config.directions_deg)?;

    let truths = (0..config.iterations)
        .into_par_iter()
        .map(|it| config.truth(it))
        .collect::<Result<Vec<_>>>()?;
    let uncalibrated = truths
        .par_iter()
        .map(|gt| coverage_db(gt, &base_book, &thetas, scale))
        .collect::<Result<Vec<_>>>()?;

    let results: Vec<Result<(Vec<f64>, bool)>> = config
        .jobs()
        .into_par_iter()
        .map(|(s, it)| {
            let gt = &truths[it];
            match calibrate_and_refine(gt, &config.noise(tag::NOISE, s, it), &config.refine) {
                Ok((_, opt)) => {
                    let book = calibrated_codebook(&opt, &config.directions_deg)?;
                    Ok((coverage_db(gt, &book, &thetas, scale)?, false))
                }
                Err(Error::ReferenceDegeneracy { .. } | Error::DegeneratePower { .. }) => {
                    Ok((uncalibrated[it].clone(), true))
                }
                Err(e) => Err(e),
            }
        })
        .collect();
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;

    let mut calibrated = Vec::new();
    for (s, group) in group_by_snr(config, results).into_iter().enumerate() {
        let failures = group.iter().filter(|g| g.1).count();
        let coverage: Vec<Vec<f64>> = group.into_iter().map(|g| g.0).collect();
        calibrated.push(CalibratedEirp {
            snr_db: config.snr_list_db[s],
            report: EirpReport::from_coverage(&thetas, &coverage)?,
            failures,
        });
    }
    let study = EirpStudy {
        uncalibrated: EirpReport::from_coverage(&thetas, &uncalibrated)?,
        calibrated,
    };
    for p in study.summary() {
        info!(
            "eirp-cdf {} {:?}: p50 {:.3} dB p99 {:.3} dB",
            p.codebook, p.snr_db, p.p50_db, p.p99_db
        );
    }
    Ok(study)
}

/// Everything produced by calibrating one array.
#[derive(Debug, Clone)]
pub struct InstanceRun {
    pub truth: GroundTruth,
    pub records: Vec<MeasurementRecord>,
    pub estimate: CalibrationEstimate,
    pub refined: RefineOutcome,
    pub errors: ErrorStats,
    pub errors_opt: ErrorStats,
    /// Only for arrays without phase-dependent errors.
    pub rev: Option<RevResult>,
}

/// Calibrates, refines and (for per-antenna truths) runs REV on the array
/// described by `truth`. Noise streams derive from `truth.seed`.
pub fn run_instance(
    truth: &TruthConfig,
    snr_db: f64,
    refine_settings: &RefineSettings,
    rev_settings: &RevSettings,
) -> Result<InstanceRun> {
    let gt = truth.generate()?;
    let noise = NoiseModel::new(snr_db, derive_seed(truth.seed, &[tag::NOISE]));
    let (estimate, records) = calibrate_simulated(&gt, &noise)?;
    let refined = refine(&estimate, &records, refine_settings)?;
    let errors = aggregate(&[InstanceErrors::from_estimate(&gt, &estimate)?], true)?;
    let errors_opt = aggregate(
        &[InstanceErrors::from_estimate(&gt, &refined.estimate)?],
        true,
    )?;
    let rev = if truth.errors.phase_dependent {
        None
    } else {
        let noise = NoiseModel::new(snr_db, derive_seed(truth.seed, &[tag::REV_NOISE]));
        Some(rev_calibrate(&gt, &noise, rev_settings)?)
    };
    Ok(InstanceRun {
        truth: gt,
        records,
        estimate,
        refined,
        errors,
        errors_opt,
        rev,
    })
}
