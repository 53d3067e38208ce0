//! CSV and JSON artifacts.
//!
//! Every CSV starts with a header row. `write_sidecar` puts a
//! `<file>.meta.json` next to an artifact with the run configuration and the
//! producing version.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::calibrate::CalibrationEstimate;
use crate::eirp::EirpReport;
use crate::error::{Error, Result};
use crate::measurement::{Element, MeasurementKind, MeasurementRecord};
use crate::refine::TraceRow;
use crate::rev::RevResult;

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Writes serializable rows as CSV, header included. Writes only the header
/// row when `rows` is empty and `header` is given.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T], header: Option<&[&str]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    if rows.is_empty() {
        if let Some(h) = header {
            w.write_record(h).map_err(|e| io_err(path, e))?;
        }
    }
    for r in rows {
        w.serialize(r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let f = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| io_err(path, e))?;
    w.write_all(b"\n").map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

#[derive(Serialize)]
struct Sidecar<'a, C: Serialize> {
    artifact: &'a str,
    version: &'a str,
    config: &'a C,
}

/// Path of the metadata file belonging to `artifact`.
pub fn sidecar_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    artifact.with_file_name(name)
}

pub fn write_sidecar<C: Serialize>(artifact: &Path, config: &C, version: &str) -> Result<()> {
    let name = artifact
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or_default();
    write_json(
        &sidecar_path(artifact),
        &Sidecar {
            artifact: name,
            version,
            config,
        },
    )
}

#[derive(Serialize)]
struct RecordRow {
    kind: MeasurementKind,
    i: usize,
    k: usize,
    m: Option<usize>,
    n: Option<usize>,
    power: f64,
}

pub fn write_records(path: &Path, records: &[MeasurementRecord]) -> Result<()> {
    let rows: Vec<RecordRow> = records
        .iter()
        .map(|r| {
            let a = r.probe.first();
            let b = r.probe.second();
            RecordRow {
                kind: r.probe.kind(),
                i: a.antenna,
                k: a.phase,
                m: b.map(|e| e.antenna),
                n: b.map(|e| e.phase),
                power: r.power,
            }
        })
        .collect();
    write_rows(path, &rows, Some(&["kind", "i", "k", "m", "n", "power"]))
}

#[derive(Serialize)]
struct EstimateRow {
    i: usize,
    k: usize,
    b_hat: f64,
    phi_hat_rad: f64,
}

pub fn write_estimate(path: &Path, estimate: &CalibrationEstimate) -> Result<()> {
    let config = estimate.config();
    let mut rows = Vec::with_capacity(config.n_elements());
    for i in 0..config.n_antennas {
        for k in 0..config.n_phases() {
            let el = Element::new(i, k);
            rows.push(EstimateRow {
                i,
                k,
                b_hat: estimate.amplitude(el),
                phi_hat_rad: estimate.phase(el),
            });
        }
    }
    write_rows(path, &rows, None)
}

pub fn write_trace(path: &Path, trace: &[TraceRow]) -> Result<()> {
    write_rows(
        path,
        trace,
        Some(&["iteration", "objective", "damping", "step_norm"]),
    )
}

#[derive(Serialize)]
struct RevRow {
    antenna: usize,
    rel_amplitude: f64,
    rel_phase_rad: f64,
    iteration: usize,
}

/// One row per sweep, relative to the composite vector; NaN for degenerate
/// sweeps.
pub fn write_rev(path: &Path, result: &RevResult) -> Result<()> {
    let rows: Vec<RevRow> = result
        .sweeps
        .iter()
        .map(|s| {
            let (a, p) = s
                .estimate
                .and_then(|e| e.relative_to_composite())
                .unwrap_or((f64::NAN, f64::NAN));
            RevRow {
                antenna: s.antenna,
                rel_amplitude: a,
                rel_phase_rad: p,
                iteration: s.iteration,
            }
        })
        .collect();
    write_rows(
        path,
        &rows,
        Some(&["antenna", "rel_amplitude", "rel_phase_rad", "iteration"]),
    )
}

pub fn write_cdf(path: &Path, report: &EirpReport) -> Result<()> {
    write_rows(path, &report.cdf, Some(&["scaled_eirp_db", "cum_prob"]))
}
