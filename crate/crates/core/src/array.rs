//! Array geometry, phase quantization and randomized error instances.
//!
//! Phase indices are 0-based: setting `k` nominally applies `k * phase_step`.
//! The element response for antenna `i` at setting `k` is
//! `b[i][k] * exp(j * phi[i][k])` with
//! `phi[i][k] = k * phase_step + shifter_error[i][k] + antenna_offset[i]`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::Element;
use crate::rng::stream_rng;

const MAX_Q_BITS: u32 = 16;

/// Antenna count and phase-shifter resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArrayConfig {
    pub n_antennas: usize,
    pub q_bits: u32,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self {
            n_antennas: 4,
            q_bits: 3,
        }
    }
}

impl ArrayConfig {
    pub fn new(n_antennas: usize, q_bits: u32) -> Result<Self> {
        let config = Self { n_antennas, q_bits };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_antennas < 2 {
            return Err(Error::Config(format!(
                "n_antennas must be at least 2, got {}",
                self.n_antennas
            )));
        }
        if !(3..=MAX_Q_BITS).contains(&self.q_bits) {
            return Err(Error::Config(format!(
                "q_bits must be in 3..={MAX_Q_BITS}, got {}",
                self.q_bits
            )));
        }
        Ok(())
    }

    /// Number of phase settings, `2^q_bits`.
    pub fn n_phases(&self) -> usize {
        1 << self.q_bits
    }

    pub fn phase_step(&self) -> f64 {
        TAU / self.n_phases() as f64
    }

    pub fn n_elements(&self) -> usize {
        self.n_antennas * self.n_phases()
    }

    pub fn check_element(&self, el: Element) -> Result<()> {
        if el.antenna >= self.n_antennas {
            return Err(Error::IndexOutOfRange {
                what: "antenna",
                index: el.antenna,
                limit: self.n_antennas,
            });
        }
        if el.phase >= self.n_phases() {
            return Err(Error::IndexOutOfRange {
                what: "phase index",
                index: el.phase,
                limit: self.n_phases(),
            });
        }
        Ok(())
    }
}

/// Nominal (error-free) phase of setting `k`.
pub fn nominal_phase(config: &ArrayConfig, k: usize) -> Result<f64> {
    if k >= config.n_phases() {
        return Err(Error::IndexOutOfRange {
            what: "phase index",
            index: k,
            limit: config.n_phases(),
        });
    }
    Ok(k as f64 * config.phase_step())
}

/// Closed interval `[lo, hi]`, serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const ZERO: Interval = Interval { lo: 0.0, hi: 0.0 };

    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn symmetric(half_width: f64) -> Self {
        Self::new(-half_width, half_width)
    }

    fn is_valid(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.random_range(self.lo..=self.hi)
        }
    }
}

impl From<[f64; 2]> for Interval {
    fn from([lo, hi]: [f64; 2]) -> Self {
        Self { lo, hi }
    }
}

impl From<Interval> for [f64; 2] {
    fn from(iv: Interval) -> Self {
        [iv.lo, iv.hi]
    }
}

/// Distributions of the per-element gain and phase errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ErrorSpec {
    pub gain_range_db: Interval,
    pub phase_shifter_err_range_deg: Interval,
    pub antenna_path_err_range_deg: Interval,
    /// `false` selects the per-antenna-only regime used for the REV comparison.
    pub phase_dependent: bool,
}

impl Default for ErrorSpec {
    fn default() -> Self {
        Self {
            gain_range_db: Interval::symmetric(1.5),
            phase_shifter_err_range_deg: Interval::symmetric(10.0),
            antenna_path_err_range_deg: Interval::symmetric(180.0),
            phase_dependent: true,
        }
    }
}

impl ErrorSpec {
    /// No errors at all: the ideal array.
    pub fn zero() -> Self {
        Self {
            gain_range_db: Interval::ZERO,
            phase_shifter_err_range_deg: Interval::ZERO,
            antenna_path_err_range_deg: Interval::ZERO,
            phase_dependent: true,
        }
    }

    /// Same distributions with the phase-dependent terms switched off.
    pub fn per_antenna(self) -> Self {
        Self {
            phase_dependent: false,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, iv) in [
            ("gain_range_db", self.gain_range_db),
            (
                "phase_shifter_err_range_deg",
                self.phase_shifter_err_range_deg,
            ),
            (
                "antenna_path_err_range_deg",
                self.antenna_path_err_range_deg,
            ),
        ] {
            if !iv.is_valid() {
                return Err(Error::Config(format!(
                    "{name} must be a finite interval with lower <= upper, got [{}, {}]",
                    iv.lo, iv.hi
                )));
            }
        }
        Ok(())
    }

    /// Largest linear amplitude any element can have.
    pub fn max_amplitude(&self) -> f64 {
        db_to_amplitude(self.gain_range_db.hi)
    }
}

pub fn db_to_amplitude(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

/// True complex responses of every (antenna, phase setting) element.
///
/// A common phase shared by all elements is kept apart from the per-element
/// phases, so phase differences are exact whatever its value.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    config: ArrayConfig,
    b: Vec<f64>,
    phi: Vec<f64>,
    antenna_offset: Vec<f64>,
    global_phase: f64,
}

impl GroundTruth {
    /// Error-free array: unit amplitudes and nominal phases.
    pub fn ideal(config: ArrayConfig) -> Self {
        let k = config.n_phases();
        let step = config.phase_step();
        Self {
            config,
            b: vec![1.0; config.n_elements()],
            phi: (0..config.n_elements())
                .map(|idx| (idx % k) as f64 * step)
                .collect(),
            antenna_offset: vec![0.0; config.n_antennas],
            global_phase: 0.0,
        }
    }

    /// Builds a truth from explicit row-major `[antenna][phase]` matrices.
    pub fn from_parts(config: ArrayConfig, b: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if b.len() != config.n_elements() || phi.len() != config.n_elements() {
            return Err(Error::Config(format!(
                "expected {} elements, got b: {}, phi: {}",
                config.n_elements(),
                b.len(),
                phi.len()
            )));
        }
        if let Some(&bad) = b.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::NonPositiveAmplitude(bad));
        }
        if phi.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config("non-finite phase in ground truth".into()));
        }
        Ok(Self {
            config,
            b,
            phi,
            antenna_offset: vec![0.0; config.n_antennas],
            global_phase: 0.0,
        })
    }

    pub fn config(&self) -> &ArrayConfig {
        &self.config
    }

    fn idx(&self, el: Element) -> usize {
        el.antenna * self.config.n_phases() + el.phase
    }

    pub fn amplitude(&self, el: Element) -> f64 {
        self.b[self.idx(el)]
    }

    pub fn phase(&self, el: Element) -> f64 {
        self.phi[self.idx(el)] + self.global_phase
    }

    /// `phase(b) - phase(a)`, free of the common phase.
    pub fn phase_difference(&self, a: Element, b: Element) -> f64 {
        self.phi[self.idx(b)] - self.phi[self.idx(a)]
    }

    pub fn response(&self, el: Element) -> Complex64 {
        Complex64::from_polar(self.amplitude(el), self.phase(el))
    }

    /// Fixed path offset drawn for antenna `i` (zero for hand-built truths).
    pub fn antenna_offset(&self, antenna: usize) -> f64 {
        self.antenna_offset[antenna] + self.global_phase
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.b
    }

    /// Per-element phases without the common phase.
    pub fn phases(&self) -> &[f64] {
        &self.phi
    }

    pub fn global_phase(&self) -> f64 {
        self.global_phase
    }

    /// The same array with `c` added to every phase. Power measurements
    /// cannot distinguish the two.
    pub fn with_global_phase(&self, c: f64) -> Self {
        Self {
            global_phase: self.global_phase + c,
            ..self.clone()
        }
    }
}

/// Draws a random error instance. Deterministic in `seed`.
pub fn generate_ground_truth(
    config: ArrayConfig,
    spec: &ErrorSpec,
    seed: u64,
) -> Result<GroundTruth> {
    config.validate()?;
    spec.validate()?;
    let mut rng = stream_rng(seed, &[]);
    let n_k = config.n_phases();
    let step = config.phase_step();

    let mut b = Vec::with_capacity(config.n_elements());
    let mut phi = Vec::with_capacity(config.n_elements());
    let mut antenna_offset = Vec::with_capacity(config.n_antennas);
    for _ in 0..config.n_antennas {
        let offset = spec
            .antenna_path_err_range_deg
            .sample(&mut rng)
            .to_radians();
        antenna_offset.push(offset);
        if spec.phase_dependent {
            for k in 0..n_k {
                b.push(db_to_amplitude(spec.gain_range_db.sample(&mut rng)));
                let shifter = spec
                    .phase_shifter_err_range_deg
                    .sample(&mut rng)
                    .to_radians();
                phi.push(k as f64 * step + shifter + offset);
            }
        } else {
            let gain = db_to_amplitude(spec.gain_range_db.sample(&mut rng));
            for k in 0..n_k {
                b.push(gain);
                phi.push(k as f64 * step + offset);
            }
        }
    }
    Ok(GroundTruth {
        config,
        b,
        phi,
        antenna_offset,
        global_phase: 0.0,
    })
}

/// Array, error model and seed of one random instance, as a flat JSON object.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TruthConfig {
    #[serde(flatten)]
    pub array: ArrayConfig,
    #[serde(flatten)]
    pub errors: ErrorSpec,
    #[serde(default)]
    pub seed: u64,
}

impl TruthConfig {
    pub fn generate(&self) -> Result<GroundTruth> {
        generate_ground_truth(self.array, &self.errors, self.seed)
    }
}
