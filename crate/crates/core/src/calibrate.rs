//! Closed-form calibration from individual and pairwise power measurements.
//!
//! Gains come from switching each element on alone. A pair measurement then
//! gives the cosine of the phase difference between two elements, and two
//! such cosines against references roughly a quarter turn apart pin the
//! phase down uniquely. `Ant0Ph0` is the phase origin; `Ant1Ph{r1}` is the
//! second reference for antennas 2.., `Ant1Ph{r1}` with `Ant2Ph{r2}` resolve
//! antenna 0, and `Ant0Ph0` with `Ant2Ph{r3}` resolve antenna 1.

use num_complex::Complex64;

use crate::array::{ArrayConfig, GroundTruth};
use crate::error::{Error, Result};
use crate::measurement::{
    stage_probes, Element, MeasurementKind, MeasurementRecord, NoiseModel, PlanStage, PowerMeter,
    Probe, SimulatedMeter,
};
use crate::metrics::wrap_phase;

/// Smallest `|sin|` of the reference separation accepted by
/// [`resolve_phase_pair`].
pub const MIN_REFERENCE_SIN: f64 = 0.05;

/// Lookahead cosines weaker than this make the sign decision of the second
/// reference unreliable.
pub const WEAK_SIGN_THRESHOLD: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CalibrationWarning {
    /// `|cos|` at the lookahead setting was below [`WEAK_SIGN_THRESHOLD`].
    WeakSignDecision { r1: usize, lookahead_cos: f64 },
}

/// Chosen reference settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct References {
    pub r1: usize,
    pub r2: usize,
    pub r3: usize,
}

/// Estimated amplitudes and phases, with `phi_hat[0][0] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationEstimate {
    config: ArrayConfig,
    b_hat: Vec<f64>,
    phi_hat: Vec<f64>,
    pub refs: References,
    pub warnings: Vec<CalibrationWarning>,
}

impl CalibrationEstimate {
    /// Wraps explicit row-major matrices. Phases are moved into the
    /// `phi_00 = 0` gauge and wrapped to `(-pi, pi]`.
    pub fn from_parts(
        config: ArrayConfig,
        b_hat: Vec<f64>,
        phi_hat: Vec<f64>,
        refs: References,
    ) -> Result<Self> {
        if b_hat.len() != config.n_elements() || phi_hat.len() != config.n_elements() {
            return Err(Error::Config(format!(
                "estimate needs {} elements, got {} and {}",
                config.n_elements(),
                b_hat.len(),
                phi_hat.len()
            )));
        }
        let origin = phi_hat[0];
        let mut phi_hat: Vec<f64> = phi_hat.iter().map(|p| wrap_phase(p - origin)).collect();
        phi_hat[0] = 0.0;
        Ok(Self {
            config,
            b_hat: b_hat.into_iter().map(|b| b.max(0.0)).collect(),
            phi_hat,
            refs,
            warnings: Vec::new(),
        })
    }

    /// Estimate equal to the error-free array.
    pub fn ideal(config: ArrayConfig) -> Self {
        let gt = GroundTruth::ideal(config);
        Self::from_parts(
            config,
            gt.amplitudes().to_vec(),
            gt.phases().to_vec(),
            References {
                r1: 0,
                r2: 0,
                r3: 0,
            },
        )
        .expect("ideal dimensions are consistent")
    }

    pub fn config(&self) -> &ArrayConfig {
        &self.config
    }

    fn idx(&self, el: Element) -> usize {
        el.antenna * self.config.n_phases() + el.phase
    }

    pub fn amplitude(&self, el: Element) -> f64 {
        self.b_hat[self.idx(el)]
    }

    pub fn phase(&self, el: Element) -> f64 {
        self.phi_hat[self.idx(el)]
    }

    pub fn response(&self, el: Element) -> Complex64 {
        Complex64::from_polar(self.amplitude(el), self.phase(el))
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.b_hat
    }

    pub fn phases(&self) -> &[f64] {
        &self.phi_hat
    }
}

/// `b_hat[i][k] = sqrt(M_ik)` from the individual records.
pub fn estimate_gains(config: &ArrayConfig, records: &[MeasurementRecord]) -> Result<Vec<f64>> {
    let mut gains = vec![f64::NAN; config.n_elements()];
    for rec in records {
        if let Probe::Individual(el) = rec.probe {
            config.check_element(el)?;
            gains[el.antenna * config.n_phases() + el.phase] = rec.power.max(0.0).sqrt();
        }
    }
    if let Some(missing) = gains.iter().position(|g| g.is_nan()) {
        let el = Element::new(missing / config.n_phases(), missing % config.n_phases());
        return Err(Error::IncompletePlan(format!(
            "individual measurement of {el}"
        )));
    }
    Ok(gains)
}

/// `cos(phi_a - phi_b)` from the pair power and both individual powers,
/// clamped to `[-1, 1]`.
pub fn estimate_cos_diff(m_pair: f64, m_a: f64, m_b: f64) -> Result<f64> {
    if !(m_a > 0.0 && m_b > 0.0) {
        return Err(Error::DegeneratePower { m_a, m_b });
    }
    Ok(((m_pair - m_a - m_b) / (2.0 * (m_a * m_b).sqrt())).clamp(-1.0, 1.0))
}

/// The second reference on antenna 1 and its phase relative to `Ant0Ph0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondReference {
    pub index: usize,
    pub phase: f64,
    /// Cosine a quarter turn ahead of `index`, which decided the sign.
    pub lookahead_cos: f64,
}

/// Index minimizing `|values[k]|`; ties go to the lowest index.
fn argmin_abs(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (k, v) in values.into_iter().enumerate() {
        if v.abs() < best.1 {
            best = (k, v.abs());
        }
    }
    best.0
}

/// Picks the antenna-1 setting whose cosine against `Ant0Ph0` is closest to
/// zero, then resolves the sign of its phase from the cosine a quarter turn
/// (`2^(Q-2)` settings) ahead: a positive cosine there means the reference
/// sits near `-pi/2`.
pub fn select_second_reference(cos_to_ref: &[f64]) -> Result<SecondReference> {
    let n_k = cos_to_ref.len();
    if n_k < 4 || !n_k.is_power_of_two() {
        return Err(Error::Config(format!("need 2^Q >= 4 cosines, got {n_k}")));
    }
    let index = argmin_abs(cos_to_ref.iter().copied());
    let lookahead_cos = cos_to_ref[(index + n_k / 4) % n_k];
    let magnitude = cos_to_ref[index].clamp(-1.0, 1.0).acos();
    let phase = if lookahead_cos > 0.0 {
        -magnitude
    } else {
        magnitude
    };
    Ok(SecondReference {
        index,
        phase,
        lookahead_cos,
    })
}

/// Solves `[A, B] = K [cos phi, sin phi]` for the unknown phase, where row
/// `j` of `K` is `[cos ref_j, sin ref_j]`, and returns `angle(u + j v)`.
pub fn resolve_phase_pair(a: f64, b: f64, ref1: f64, ref2: f64) -> Result<f64> {
    let (s1, c1) = ref1.sin_cos();
    let (s2, c2) = ref2.sin_cos();
    let det = c1 * s2 - s1 * c2;
    if det.abs() < MIN_REFERENCE_SIN {
        return Err(Error::ReferenceDegeneracy {
            ref1,
            ref2,
            sin_sep: det.abs(),
        });
    }
    let u = (a * s2 - b * s1) / det;
    let v = (b * c1 - a * c2) / det;
    Ok(wrap_phase(v.atan2(u)))
}

struct Session<'m, M: PowerMeter> {
    meter: &'m mut M,
    records: Vec<MeasurementRecord>,
    individual: Vec<f64>,
    n_k: usize,
}

impl<M: PowerMeter> Session<'_, M> {
    fn run(&mut self, stage: PlanStage) -> Result<Vec<f64>> {
        let probes = stage_probes(self.meter.config(), stage)?;
        let mut powers = Vec::with_capacity(probes.len());
        for probe in probes {
            let power = self.meter.measure(probe)?;
            self.records.push(MeasurementRecord { probe, power });
            powers.push(power);
        }
        Ok(powers)
    }

    fn individual(&self, el: Element) -> f64 {
        self.individual[el.antenna * self.n_k + el.phase]
    }

    fn cos(&self, m_pair: f64, a: Element, b: Element) -> Result<f64> {
        let (m_a, m_b) = (self.individual(a), self.individual(b));
        estimate_cos_diff(m_pair, m_a, m_b)
            .map_err(|_| Error::DegenerateElement(if m_a > 0.0 { b } else { a }))
    }
}

/// Runs the full measurement sequence against `meter` and solves for every
/// element. Returns the estimate and the log of all `3 N 2^Q - 3` readings.
pub fn run_calibration<M: PowerMeter>(
    meter: &mut M,
) -> Result<(CalibrationEstimate, Vec<MeasurementRecord>)> {
    let config = *meter.config();
    config.validate()?;
    if config.n_antennas < 3 {
        return Err(Error::Config(
            "calibration needs at least 3 antennas".into(),
        ));
    }
    let n_k = config.n_phases();
    let el = Element::new;
    let origin = el(0, 0);

    let mut s = Session {
        meter,
        records: Vec::new(),
        individual: Vec::new(),
        n_k,
    };

    // Gains.
    s.individual = s.run(PlanStage::Individual)?;
    let b_hat = estimate_gains(&config, &s.records)?;
    let mut phi = vec![0.0; config.n_elements()];
    let at = |e: Element| e.antenna * n_k + e.phase;

    // Antenna 1 against the origin, then the second reference.
    let first = s.run(PlanStage::FirstReference)?;
    let cos_ant1 = first
        .iter()
        .enumerate()
        .map(|(k, &m)| s.cos(m, el(1, k), origin))
        .collect::<Result<Vec<_>>>()?;
    let second = select_second_reference(&cos_ant1)?;
    let r1 = second.index;
    let phi_r1 = second.phase;
    phi[at(el(1, r1))] = wrap_phase(phi_r1);
    let mut warnings = Vec::new();
    if second.lookahead_cos.abs() < WEAK_SIGN_THRESHOLD {
        warnings.push(CalibrationWarning::WeakSignDecision {
            r1,
            lookahead_cos: second.lookahead_cos,
        });
    }

    // Antennas 2.. against the origin and Ant1Ph{r1}.
    let outer = s.run(PlanStage::OuterAntennas { r1 })?;
    for (pair, (i, k)) in outer
        .chunks_exact(2)
        .zip((2..config.n_antennas).flat_map(|i| (0..n_k).map(move |k| (i, k))))
    {
        let target = el(i, k);
        let a = s.cos(pair[0], target, origin)?;
        let b = s.cos(pair[1], target, el(1, r1))?;
        phi[at(target)] = resolve_phase_pair(a, b, 0.0, phi_r1)?;
    }

    // Antenna 0 against Ant1Ph{r1} and Ant2Ph{r2}.
    let r2 = argmin_abs((0..n_k).map(|k| (phi[at(el(2, k))] - phi_r1).cos()));
    let phi_r2 = phi[at(el(2, r2))];
    let zero = s.run(PlanStage::AntennaZero { r1, r2 })?;
    for (pair, k) in zero.chunks_exact(2).zip(1..n_k) {
        let target = el(0, k);
        let a = s.cos(pair[0], target, el(1, r1))?;
        let b = s.cos(pair[1], target, el(2, r2))?;
        phi[at(target)] = resolve_phase_pair(a, b, phi_r1, phi_r2)?;
    }

    // Remaining settings of antenna 1 against the origin and Ant2Ph{r3}.
    let r3 = argmin_abs((0..n_k).map(|k| phi[at(el(2, k))].cos()));
    let phi_r3 = phi[at(el(2, r3))];
    let one = s.run(PlanStage::AntennaOne { r1, r3 })?;
    for (&m, k) in one.iter().zip((0..n_k).filter(|&k| k != r1)) {
        let target = el(1, k);
        let b = s.cos(m, target, el(2, r3))?;
        phi[at(target)] = resolve_phase_pair(cos_ant1[k], b, 0.0, phi_r3)?;
    }

    phi[0] = 0.0;
    let estimate = CalibrationEstimate {
        config,
        b_hat,
        phi_hat: phi,
        refs: References { r1, r2, r3 },
        warnings,
    };
    Ok((estimate, s.records))
}

/// Calibrates a simulated array.
pub fn calibrate_simulated(
    gt: &GroundTruth,
    noise: &NoiseModel,
) -> Result<(CalibrationEstimate, Vec<MeasurementRecord>)> {
    noise.validate()?;
    run_calibration(&mut SimulatedMeter::new(gt, *noise))
}

/// Counts records of each kind, `(individual, pair)`.
pub fn record_counts(records: &[MeasurementRecord]) -> (usize, usize) {
    let ind = records
        .iter()
        .filter(|r| r.probe.kind() == MeasurementKind::Individual)
        .count();
    (ind, records.len() - ind)
}
