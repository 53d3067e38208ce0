//! Rotating-element electric-field vector (REV) baseline.
//!
//! With every antenna on, one antenna at a time is stepped through all of its
//! phase settings while the others stay at setting 0. The total power traces
//! `|E_rest|^2 + |e|^2 + 2 |E_rest| |e| cos(d + theta)`, where `d` is the
//! phase of the rotated element relative to the rest of the array. The peak
//! and trough of the sweep give `d` and the amplitudes.
//!
//! Between iterations the estimated offsets are removed from the simulated
//! array as continuous (unquantized) corrections, which a real phase
//! shifter could not apply. This favours REV.
//!
//! The baseline assumes per-antenna errors only.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::{ArrayConfig, GroundTruth};
use crate::error::{Error, Result};
use crate::measurement::{Element, NoiseModel};
use crate::metrics::wrap_phase;
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RevEstimator {
    /// Peak and trough of the quantized sweep.
    #[default]
    GridPeak,
    /// First Fourier coefficient of the sweep (sensitivity studies only).
    DftFit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RevSettings {
    pub iterations: usize,
    pub estimator: RevEstimator,
}

impl Default for RevSettings {
    fn default() -> Self {
        Self {
            iterations: 2,
            estimator: RevEstimator::GridPeak,
        }
    }
}

/// What one rotation sweep tells us about the rotated element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepEstimate {
    /// Phase of the element relative to the rest of the array.
    pub rel_phase: f64,
    /// `|e| / |E_rest|`.
    pub rel_amplitude: f64,
    /// `|e|` in units of unit single-element field.
    pub amplitude: f64,
    pub p_max: f64,
    pub p_min: f64,
}

/// Estimates from the powers of one sweep, `powers[k]` taken at nominal
/// rotation `k * phase_step`. `None` when the sweep is flat at zero
/// (degenerate composite vector).
pub fn estimate_sweep(powers: &[f64], estimator: RevEstimator) -> Option<SweepEstimate> {
    let n = powers.len();
    let step = TAU / n as f64;
    let (k_max, p_max) =
        powers
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, p)| {
                if p > best.1 {
                    (k, p)
                } else {
                    best
                }
            });
    let p_min = powers.iter().copied().fold(f64::INFINITY, f64::min);
    match estimator {
        RevEstimator::GridPeak => {
            let (hi, lo) = (p_max.max(0.0).sqrt(), p_min.max(0.0).sqrt());
            if hi + lo < 1e-12 {
                return None;
            }
            Some(SweepEstimate {
                rel_phase: wrap_phase(-(k_max as f64) * step),
                rel_amplitude: (hi - lo) / (hi + lo),
                amplitude: (hi - lo) / 2.0,
                p_max,
                p_min,
            })
        }
        RevEstimator::DftFit => {
            let x1: Complex64 = powers
                .iter()
                .enumerate()
                .map(|(k, &p)| p * Complex64::from_polar(1.0, -(k as f64) * step))
                .sum();
            let mean = powers.iter().sum::<f64>() / n as f64;
            let cross = x1.norm() / n as f64;
            if mean < 1e-12 {
                return None;
            }
            // |e|^2 and |E_rest|^2 are the roots of t^2 - mean t + cross^2.
            let disc = (mean * mean - 4.0 * cross * cross).max(0.0).sqrt();
            let small = ((mean - disc) / 2.0).max(0.0);
            let large = (mean + disc) / 2.0;
            Some(SweepEstimate {
                rel_phase: wrap_phase(x1.arg()),
                rel_amplitude: (small / large).sqrt(),
                amplitude: small.sqrt(),
                p_max,
                p_min,
            })
        }
    }
}

impl SweepEstimate {
    /// `e / E_0` as (amplitude, phase), where `E_0 = E_rest + e` is the
    /// composite vector of the whole array. `None` when `E_0` vanishes.
    pub fn relative_to_composite(&self) -> Option<(f64, f64)> {
        let z = Complex64::from_polar(self.rel_amplitude, self.rel_phase);
        let denom = Complex64::new(1.0, 0.0) + z;
        if denom.norm() < 1e-12 {
            return None;
        }
        let x = z / denom;
        Some((x.norm(), x.arg()))
    }
}

/// One antenna's sweep in one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RevSweep {
    pub iteration: usize,
    pub antenna: usize,
    /// `None` when the composite vector was degenerate.
    pub estimate: Option<SweepEstimate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RevResult {
    /// `|e_i| / |E_0|` from the last iteration.
    pub rel_amplitude: Vec<f64>,
    /// Phase of `e_i` relative to the composite vector `E_0`, last iteration.
    pub rel_phase: Vec<f64>,
    /// Element amplitudes from the last iteration.
    pub amplitude: Vec<f64>,
    /// Accumulated offsets in the `phi_00 = 0` gauge: the estimate of
    /// `phi_i0 - phi_00`.
    pub offset: Vec<f64>,
    pub sweeps: Vec<RevSweep>,
    /// Antennas whose last sweep was degenerate.
    pub failures: Vec<usize>,
    pub measurement_count: usize,
}

fn is_per_antenna(gt: &GroundTruth) -> bool {
    let config = gt.config();
    let step = config.phase_step();
    (0..config.n_antennas).all(|i| {
        let b0 = gt.amplitude(Element::new(i, 0));
        let p0 = gt.phase(Element::new(i, 0));
        (1..config.n_phases()).all(|k| {
            let el = Element::new(i, k);
            (gt.amplitude(el) - b0).abs() <= 1e-12 * b0
                && wrap_phase(gt.phase(el) - k as f64 * step - p0).abs() <= 1e-9
        })
    })
}

/// Runs `settings.iterations` rounds of REV on a per-antenna-error array.
pub fn rev_calibrate(
    gt: &GroundTruth,
    noise: &NoiseModel,
    settings: &RevSettings,
) -> Result<RevResult> {
    noise.validate()?;
    if settings.iterations == 0 {
        return Err(Error::Config("REV needs at least one iteration".into()));
    }
    if !is_per_antenna(gt) {
        return Err(Error::Config(
            "REV baseline requires an array without phase-dependent errors".into(),
        ));
    }
    let config: ArrayConfig = *gt.config();
    let n = config.n_antennas;
    let n_k = config.n_phases();

    let mut correction = vec![0.0; n];
    let mut sweeps = Vec::with_capacity(settings.iterations * n);
    let mut last = vec![None; n];
    let mut ordinal = 0u64;

    for iteration in 0..settings.iterations {
        let fields: Vec<Complex64> = (0..n)
            .map(|i| gt.response(Element::new(i, 0)) * Complex64::from_polar(1.0, -correction[i]))
            .collect();
        let total: Complex64 = fields.iter().sum();
        let mut update = vec![0.0; n];
        for i in 0..n {
            let rest = total - fields[i];
            let powers: Vec<f64> = (0..n_k)
                .map(|k| {
                    let rotated = gt.response(Element::new(i, k))
                        * Complex64::from_polar(1.0, -correction[i]);
                    let mut rng = stream_rng(noise.seed, &[ordinal]);
                    ordinal += 1;
                    noise.detect(rest + rotated, &mut rng)
                })
                .collect();
            let estimate = estimate_sweep(&powers, settings.estimator);
            let composite = estimate.and_then(|e| e.relative_to_composite());
            if let Some((_, phase)) = composite {
                update[i] = phase;
            }
            last[i] = estimate.zip(composite);
            sweeps.push(RevSweep {
                iteration,
                antenna: i,
                estimate,
            });
        }
        for (c, u) in correction.iter_mut().zip(update) {
            *c += u;
        }
    }

    let failures = (0..n).filter(|&i| last[i].is_none()).collect();
    let pick = |f: fn(&(SweepEstimate, (f64, f64))) -> f64| -> Vec<f64> {
        last.iter()
            .map(|e| e.as_ref().map_or(f64::NAN, f))
            .collect()
    };
    Ok(RevResult {
        rel_amplitude: pick(|e| e.1 .0),
        rel_phase: pick(|e| e.1 .1),
        amplitude: pick(|e| e.0.amplitude),
        offset: correction
            .iter()
            .map(|c| wrap_phase(c - correction[0]))
            .collect(),
        sweeps,
        failures,
        measurement_count: ordinal as usize,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{generate_ground_truth, ErrorSpec};
    use crate::metrics::wrapped_phase_error;
    use std::f64::consts::{FRAC_PI_4, PI};

    fn sweep_powers(rest: Complex64, element: Complex64, n_k: usize) -> Vec<f64> {
        (0..n_k)
            .map(|k| {
                (rest + element * Complex64::from_polar(1.0, k as f64 * TAU / n_k as f64))
                    .norm_sqr()
            })
            .collect()
    }

    #[test]
    fn grid_sweep_on_grid_offset() {
        let p = sweep_powers(
            Complex64::new(1.0, 0.0),
            Complex64::from_polar(0.5, FRAC_PI_4),
            8,
        );
        // Peak at rotation -pi/4, i.e. setting 7.
        assert_eq!(p.iter().cloned().fold(f64::MIN, f64::max), p[7]);
        let e = estimate_sweep(&p, RevEstimator::GridPeak).unwrap();
        assert!((e.p_max - 2.25).abs() < 1e-12);
        assert!((e.p_min - 0.25).abs() < 1e-12);
        assert!((e.rel_amplitude - 0.5).abs() < 1e-12);
        assert!((e.amplitude - 0.5).abs() < 1e-12);
        assert!((e.rel_phase - FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn dft_sweep_off_grid_offset_is_exact() {
        let p = sweep_powers(
            Complex64::from_polar(2.0, 0.4),
            Complex64::from_polar(0.7, 1.1),
            8,
        );
        let e = estimate_sweep(&p, RevEstimator::DftFit).unwrap();
        assert!((e.rel_phase - 0.7).abs() < 1e-12);
        assert!((e.rel_amplitude - 0.35).abs() < 1e-12);
        assert!((e.amplitude - 0.7).abs() < 1e-12);
    }

    #[test]
    fn grid_sweep_error_within_half_step() {
        let n_k = 8;
        for t in 0..200 {
            let d = -PI + TAU * (t as f64 + 0.37) / 200.0;
            let rest = Complex64::from_polar(1.3, 0.2 * t as f64);
            let el = rest / rest.norm() * Complex64::from_polar(0.8, d);
            let e = estimate_sweep(&sweep_powers(rest, el, n_k), RevEstimator::GridPeak).unwrap();
            assert!(wrapped_phase_error(d, e.rel_phase) <= PI / n_k as f64 + 1e-12);
        }
    }

    #[test]
    fn ideal_array_has_zero_offsets() {
        let gt = GroundTruth::ideal(ArrayConfig::default());
        let r = rev_calibrate(&gt, &NoiseModel::noiseless(), &RevSettings::default()).unwrap();
        assert_eq!(r.measurement_count, 64);
        assert!(r.offset.iter().all(|o| o.abs() < 1e-12));
        assert!(r.failures.is_empty());
    }

    #[test]
    fn measurement_count_scales_with_iterations() {
        let config = ArrayConfig::new(5, 4).unwrap();
        let gt = GroundTruth::ideal(config);
        for iterations in 1..=3 {
            let s = RevSettings {
                iterations,
                ..RevSettings::default()
            };
            let r = rev_calibrate(&gt, &NoiseModel::new(20.0, 0), &s).unwrap();
            assert_eq!(r.measurement_count, iterations * 5 * 16);
            assert_eq!(r.sweeps.len(), iterations * 5);
        }
    }

    fn on_grid_truth(config: ArrayConfig, offsets: &[usize]) -> GroundTruth {
        let n_k = config.n_phases();
        let step = config.phase_step();
        let phi = offsets
            .iter()
            .flat_map(|&o| (0..n_k).map(move |k| (k + o) as f64 * step))
            .collect();
        GroundTruth::from_parts(config, vec![1.0; offsets.len() * n_k], phi).unwrap()
    }

    #[test]
    fn on_grid_offsets_recovered_exactly_when_rest_is_on_grid() {
        let config = ArrayConfig::new(2, 3).unwrap();
        for o0 in 0..8 {
            for o1 in 0..8 {
                let gt = on_grid_truth(config, &[o0, o1]);
                let r =
                    rev_calibrate(&gt, &NoiseModel::noiseless(), &RevSettings::default()).unwrap();
                if (o0 + 4) % 8 == o1 {
                    // Antiphase pair: the composite vector vanishes.
                    assert_eq!(r.failures, vec![0, 1]);
                    continue;
                }
                let truth = (o1 as f64 - o0 as f64) * config.phase_step();
                assert!(wrapped_phase_error(truth, r.offset[1]) < 1e-9, "{o0} {o1}");
            }
        }
    }

    #[test]
    fn dft_fit_recovers_offsets_in_one_pass() {
        let config = ArrayConfig::new(6, 3).unwrap();
        let s = RevSettings {
            iterations: 1,
            estimator: RevEstimator::DftFit,
        };
        // Small offsets keep each element weaker than the rest of the array,
        // which a single sweep cannot otherwise tell apart.
        let spec = ErrorSpec {
            antenna_path_err_range_deg: crate::array::Interval::symmetric(45.0),
            ..ErrorSpec::default().per_antenna()
        };
        for seed in 0..50 {
            let gt = generate_ground_truth(config, &spec, seed).unwrap();
            let r = rev_calibrate(&gt, &NoiseModel::noiseless(), &s).unwrap();
            assert!(r.failures.is_empty());
            for i in 0..6 {
                let truth = gt.antenna_offset(i) - gt.antenna_offset(0);
                assert!(
                    wrapped_phase_error(truth, r.offset[i]) < 1e-9,
                    "seed {seed} antenna {i}"
                );
                assert!((r.amplitude[i] - gt.amplitude(Element::new(i, 0))).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_phase_dependent_truth() {
        let gt = generate_ground_truth(ArrayConfig::default(), &ErrorSpec::default(), 1).unwrap();
        assert!(rev_calibrate(&gt, &NoiseModel::noiseless(), &RevSettings::default()).is_err());
        let per = generate_ground_truth(
            ArrayConfig::default(),
            &ErrorSpec::default().per_antenna(),
            1,
        )
        .unwrap();
        assert!(rev_calibrate(&per, &NoiseModel::noiseless(), &RevSettings::default()).is_ok());
    }
}
