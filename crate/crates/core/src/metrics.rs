//! Phase and gain error statistics.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::array::GroundTruth;
use crate::calibrate::CalibrationEstimate;
use crate::error::{Error, Result};
use crate::measurement::Element;

/// Maps an angle to `(-pi, pi]`.
pub fn wrap_phase(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Distance on the circle, `min over l of |true - est + 2*pi*l|`, in `[0, pi]`.
pub fn wrapped_phase_error(true_phi: f64, est_phi: f64) -> f64 {
    wrap_phase(true_phi - est_phi).abs()
}

/// `20 log10(|b - b_hat| / b + 1)`: never negative, symmetric in the sign of
/// the deviation.
pub fn gain_error_db(true_b: f64, est_b: f64) -> Result<f64> {
    if true_b.is_nan() || true_b <= 0.0 {
        return Err(Error::NonPositiveAmplitude(true_b));
    }
    Ok(20.0 * ((true_b - est_b).abs() / true_b + 1.0).log10())
}

/// Per-element errors of one array instance.
///
/// Both vectors are row-major over `(antenna, setting)` with `n_phases`
/// settings per antenna. Flat index 0 is the reference element.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceErrors {
    pub n_phases: usize,
    pub phase: Vec<f64>,
    pub gain_db: Vec<f64>,
}

impl InstanceErrors {
    /// Errors of `est` against `gt`, with truth phases taken relative to
    /// `phi_00`.
    pub fn from_estimate(gt: &GroundTruth, est: &CalibrationEstimate) -> Result<Self> {
        let config = gt.config();
        let n_k = config.n_phases();
        let origin = gt.phase(Element::new(0, 0));
        let mut phase = Vec::with_capacity(config.n_elements());
        let mut gain_db = Vec::with_capacity(config.n_elements());
        for i in 0..config.n_antennas {
            for k in 0..n_k {
                let el = Element::new(i, k);
                phase.push(wrapped_phase_error(gt.phase(el) - origin, est.phase(el)));
                gain_db.push(gain_error_db(gt.amplitude(el), est.amplitude(el))?);
            }
        }
        Ok(Self {
            n_phases: n_k,
            phase,
            gain_db,
        })
    }

    /// Collapses each antenna to the mean of its per-setting errors. Used in
    /// the per-antenna error regime, where only one offset per antenna exists.
    pub fn per_antenna_mean(&self) -> Self {
        let mean = |v: &[f64]| -> Vec<f64> {
            v.chunks(self.n_phases)
                .map(|c| c.iter().sum::<f64>() / c.len() as f64)
                .collect()
        };
        Self {
            n_phases: 1,
            phase: mean(&self.phase),
            gain_db: mean(&self.gain_db),
        }
    }
}

/// Monte Carlo error summary.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorStats {
    pub err_max_rad: f64,
    pub err_avg_rad: f64,
    pub gain_err_max_db: f64,
    pub gain_err_avg_db: f64,
}

/// Mean of per-instance maxima and grand mean, over all instances.
///
/// Phase statistics skip the reference element when `exclude_reference` is
/// set; gain statistics always cover every element.
pub fn aggregate(instances: &[InstanceErrors], exclude_reference: bool) -> Result<ErrorStats> {
    if instances.is_empty() {
        return Err(Error::EmptyInput);
    }
    let skip = usize::from(exclude_reference);
    let mut acc = [0.0f64; 4];
    let (mut n_phase, mut n_gain) = (0usize, 0usize);
    for inst in instances {
        let phase = &inst.phase[skip.min(inst.phase.len())..];
        acc[0] += phase.iter().copied().fold(0.0, f64::max);
        acc[1] += phase.iter().sum::<f64>();
        n_phase += phase.len();
        acc[2] += inst.gain_db.iter().copied().fold(0.0, f64::max);
        acc[3] += inst.gain_db.iter().sum::<f64>();
        n_gain += inst.gain_db.len();
    }
    let n = instances.len() as f64;
    let per = |s: f64, c: usize| if c == 0 { 0.0 } else { s / c as f64 };
    Ok(ErrorStats {
        err_max_rad: acc[0] / n,
        err_avg_rad: per(acc[1], n_phase),
        gain_err_max_db: acc[2] / n,
        gain_err_avg_db: per(acc[3], n_gain),
    })
}
