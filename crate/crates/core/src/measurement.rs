//! Boresight power measurements with complex AWGN, and the measurement plan.
//!
//! A measurement switches on one element (individual) or two elements
//! (pair) and records `|sum of element fields + w|^2`, where `w` is
//! circularly-symmetric complex Gaussian noise with total variance
//! `10^(-snr_db / 10)` relative to unit single-element power.
//!
//! The noise phase is referenced to the first active element of the probe.
//! Since `w` is circularly symmetric this has the same distribution as any
//! fixed reference frame, and it makes every simulated power depend on
//! phase differences only.

use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::array::{ArrayConfig, GroundTruth};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// One (antenna, phase setting) element of the array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Element {
    pub antenna: usize,
    pub phase: usize,
}

impl Element {
    pub const fn new(antenna: usize, phase: usize) -> Self {
        Self { antenna, phase }
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Ant{}Ph{}", self.antenna, self.phase)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasurementKind {
    Individual,
    Pair,
}

/// Which elements are switched on for a measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Probe {
    Individual(Element),
    Pair(Element, Element),
}

impl Probe {
    /// Pair probe; rejects using the same element twice.
    pub fn pair(first: Element, second: Element) -> Result<Self> {
        if first == second {
            return Err(Error::IdenticalPair(first));
        }
        Ok(Probe::Pair(first, second))
    }

    pub fn kind(&self) -> MeasurementKind {
        match self {
            Probe::Individual(_) => MeasurementKind::Individual,
            Probe::Pair(..) => MeasurementKind::Pair,
        }
    }

    pub fn first(&self) -> Element {
        match *self {
            Probe::Individual(a) | Probe::Pair(a, _) => a,
        }
    }

    pub fn second(&self) -> Option<Element> {
        match *self {
            Probe::Individual(_) => None,
            Probe::Pair(_, b) => Some(b),
        }
    }

    fn validate(&self, config: &ArrayConfig) -> Result<()> {
        match *self {
            Probe::Individual(a) => config.check_element(a),
            Probe::Pair(a, b) => {
                config.check_element(a)?;
                config.check_element(b)?;
                if a == b {
                    return Err(Error::IdenticalPair(a));
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Probe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Probe::Individual(a) => write!(f, "M[{a}]"),
            Probe::Pair(a, b) => write!(f, "M[{a},{b}]"),
        }
    }
}

/// One simulated (or measured) power reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementRecord {
    pub probe: Probe,
    pub power: f64,
}

/// Complex AWGN at a given SNR. `snr_db = +inf` is the noiseless channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub snr_db: f64,
    pub seed: u64,
    /// Readings averaged per measurement. The algorithm itself uses 1.
    #[serde(default = "one")]
    pub repeats: u32,
}

fn one() -> u32 {
    1
}

impl NoiseModel {
    pub fn new(snr_db: f64, seed: u64) -> Self {
        Self {
            snr_db,
            seed,
            repeats: 1,
        }
    }

    pub fn noiseless() -> Self {
        Self::new(f64::INFINITY, 0)
    }

    pub fn with_repeats(self, repeats: u32) -> Self {
        Self {
            repeats: repeats.max(1),
            ..self
        }
    }

    pub fn is_noiseless(&self) -> bool {
        self.snr_db == f64::INFINITY
    }

    /// Total complex noise variance `E|w|^2`.
    pub fn variance(&self) -> f64 {
        if self.is_noiseless() {
            0.0
        } else {
            10f64.powf(-self.snr_db / 10.0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::Config(format!("invalid SNR {} dB", self.snr_db)));
        }
        Ok(())
    }

    /// One noise sample; exactly zero when noiseless.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        if self.is_noiseless() {
            return Complex64::new(0.0, 0.0);
        }
        let scale = (self.variance() / 2.0).sqrt();
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(scale * re, scale * im)
    }

    /// Detected power of `field`, averaged over `repeats` noisy readings.
    pub fn detect<R: Rng + ?Sized>(&self, field: Complex64, rng: &mut R) -> f64 {
        if self.is_noiseless() {
            return field.norm_sqr();
        }
        let n = self.repeats.max(1);
        (0..n)
            .map(|_| (field + self.draw(rng)).norm_sqr())
            .sum::<f64>()
            / n as f64
    }
}

/// Power with only element `el` switched on.
pub fn simulate_individual<R: Rng + ?Sized>(
    gt: &GroundTruth,
    el: Element,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<f64> {
    gt.config().check_element(el)?;
    let field = Complex64::new(gt.amplitude(el), 0.0);
    Ok(noise.detect(field, rng))
}

/// Power with elements `a` and `b` switched on together.
pub fn simulate_pair<R: Rng + ?Sized>(
    gt: &GroundTruth,
    a: Element,
    b: Element,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<f64> {
    Probe::pair(a, b)?.validate(gt.config())?;
    let field = Complex64::new(gt.amplitude(a), 0.0)
        + Complex64::from_polar(gt.amplitude(b), gt.phase_difference(a, b));
    Ok(noise.detect(field, rng))
}

/// Anything that can take a power reading for a probe.
///
/// The calibrator only talks to this trait, so a hardware-backed meter can
/// replace the simulator.
pub trait PowerMeter {
    fn config(&self) -> &ArrayConfig;
    fn measure(&mut self, probe: Probe) -> Result<f64>;
}

/// Simulated meter. The `n`-th reading uses its own stream `(noise.seed, n)`,
/// so a full plan gives identical powers whether run at once or stage by stage.
#[derive(Debug, Clone)]
pub struct SimulatedMeter<'a> {
    gt: &'a GroundTruth,
    noise: NoiseModel,
    ordinal: u64,
}

impl<'a> SimulatedMeter<'a> {
    pub fn new(gt: &'a GroundTruth, noise: NoiseModel) -> Self {
        Self {
            gt,
            noise,
            ordinal: 0,
        }
    }

    /// Readings taken so far.
    pub fn count(&self) -> u64 {
        self.ordinal
    }

    fn next_stream(&mut self) -> ChaCha8Rng {
        let rng = stream_rng(self.noise.seed, &[self.ordinal]);
        self.ordinal += 1;
        rng
    }
}

impl PowerMeter for SimulatedMeter<'_> {
    fn config(&self) -> &ArrayConfig {
        self.gt.config()
    }

    fn measure(&mut self, probe: Probe) -> Result<f64> {
        probe.validate(self.gt.config())?;
        let mut rng = self.next_stream();
        match probe {
            Probe::Individual(a) => simulate_individual(self.gt, a, &self.noise, &mut rng),
            Probe::Pair(a, b) => simulate_pair(self.gt, a, b, &self.noise, &mut rng),
        }
    }
}

/// Portions of the plan, in the order the calibrator executes them. Later
/// stages depend on reference settings chosen from earlier results.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanStage {
    /// Every element alone.
    Individual,
    /// Antenna 1, all settings, against `Ant0Ph0`.
    FirstReference,
    /// Antennas 2.., all settings, against `Ant0Ph0` and `Ant1Ph{r1}`.
    OuterAntennas { r1: usize },
    /// Antenna 0, settings 1.., against `Ant1Ph{r1}` and `Ant2Ph{r2}`.
    AntennaZero { r1: usize, r2: usize },
    /// Antenna 1, settings other than `r1`, against `Ant2Ph{r3}`.
    AntennaOne { r1: usize, r3: usize },
}

/// Ordered list of probes.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MeasurementPlan {
    pub probes: Vec<Probe>,
}

impl MeasurementPlan {
    pub fn len(&self) -> usize {
        self.probes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probes.is_empty()
    }

    pub fn count(&self, kind: MeasurementKind) -> usize {
        self.probes.iter().filter(|p| p.kind() == kind).count()
    }
}

/// Size of the complete plan: `3 * N * 2^Q - 3`.
pub fn plan_size(config: &ArrayConfig) -> usize {
    3 * config.n_elements() - 3
}

fn check_phase(config: &ArrayConfig, k: usize) -> Result<()> {
    if k >= config.n_phases() {
        return Err(Error::IndexOutOfRange {
            what: "reference phase index",
            index: k,
            limit: config.n_phases(),
        });
    }
    Ok(())
}

/// Probes of a single stage.
pub fn stage_probes(config: &ArrayConfig, stage: PlanStage) -> Result<Vec<Probe>> {
    config.validate()?;
    if config.n_antennas < 3 {
        return Err(Error::Config(
            "the calibration plan needs at least 3 antennas".into(),
        ));
    }
    let n_k = config.n_phases();
    let origin = Element::new(0, 0);
    let el = Element::new;
    let probes = match stage {
        PlanStage::Individual => (0..config.n_antennas)
            .flat_map(|i| (0..n_k).map(move |k| Probe::Individual(el(i, k))))
            .collect(),
        PlanStage::FirstReference => (0..n_k).map(|k| Probe::Pair(el(1, k), origin)).collect(),
        PlanStage::OuterAntennas { r1 } => {
            check_phase(config, r1)?;
            (2..config.n_antennas)
                .flat_map(|i| {
                    (0..n_k).flat_map(move |k| {
                        [
                            Probe::Pair(el(i, k), origin),
                            Probe::Pair(el(i, k), el(1, r1)),
                        ]
                    })
                })
                .collect()
        }
        PlanStage::AntennaZero { r1, r2 } => {
            check_phase(config, r1)?;
            check_phase(config, r2)?;
            (1..n_k)
                .flat_map(|k| {
                    [
                        Probe::Pair(el(0, k), el(1, r1)),
                        Probe::Pair(el(0, k), el(2, r2)),
                    ]
                })
                .collect()
        }
        PlanStage::AntennaOne { r1, r3 } => {
            check_phase(config, r1)?;
            check_phase(config, r3)?;
            (0..n_k)
                .filter(|&k| k != r1)
                .map(|k| Probe::Pair(el(1, k), el(2, r3)))
                .collect()
        }
    };
    Ok(probes)
}

/// The complete plan for given reference settings.
pub fn build_plan(
    config: &ArrayConfig,
    r1: usize,
    r2: usize,
    r3: usize,
) -> Result<MeasurementPlan> {
    let stages = [
        PlanStage::Individual,
        PlanStage::FirstReference,
        PlanStage::OuterAntennas { r1 },
        PlanStage::AntennaZero { r1, r2 },
        PlanStage::AntennaOne { r1, r3 },
    ];
    let mut probes = Vec::with_capacity(plan_size(config));
    for stage in stages {
        probes.extend(stage_probes(config, stage)?);
    }
    Ok(MeasurementPlan { probes })
}

/// Measures every probe of `plan` on the simulated array.
pub fn run_plan(
    gt: &GroundTruth,
    plan: &MeasurementPlan,
    noise: &NoiseModel,
) -> Result<Vec<MeasurementRecord>> {
    noise.validate()?;
    let mut meter = SimulatedMeter::new(gt, *noise);
    plan.probes
        .iter()
        .map(|&probe| {
            Ok(MeasurementRecord {
                probe,
                power: meter.measure(probe)?,
            })
        })
        .collect()
}
