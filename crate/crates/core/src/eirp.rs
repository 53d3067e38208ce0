//! Quantized beam codebooks and EIRP coverage statistics for a half-wavelength
//! linear array.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::{ArrayConfig, GroundTruth};
use crate::calibrate::CalibrationEstimate;
use crate::error::{Error, Result};
use crate::measurement::Element;

/// Beam directions of the default codebook, in degrees.
pub const DEFAULT_DIRECTIONS_DEG: [f64; 6] = [90.0, 19.0, 40.0, -19.0, -40.0, 0.0];

/// One phase setting per antenna.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Codeword {
    pub phase_indices: Vec<usize>,
}

impl Codeword {
    pub fn new(config: &ArrayConfig, phase_indices: Vec<usize>) -> Result<Self> {
        if phase_indices.len() != config.n_antennas {
            return Err(Error::Config(format!(
                "codeword has {} entries for {} antennas",
                phase_indices.len(),
                config.n_antennas
            )));
        }
        for (i, &k) in phase_indices.iter().enumerate() {
            config.check_element(Element::new(i, k))?;
        }
        Ok(Self { phase_indices })
    }

    pub fn zeros(config: &ArrayConfig) -> Self {
        Self {
            phase_indices: vec![0; config.n_antennas],
        }
    }
}

/// Anything that gives a complex response per element.
pub trait ElementResponse {
    fn config(&self) -> &ArrayConfig;
    fn response(&self, el: Element) -> Complex64;
}

/// The error-free array: unit amplitude, nominal phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdealArray(pub ArrayConfig);

impl ElementResponse for IdealArray {
    fn config(&self) -> &ArrayConfig {
        &self.0
    }
    fn response(&self, el: Element) -> Complex64 {
        Complex64::from_polar(1.0, el.phase as f64 * self.0.phase_step())
    }
}

impl ElementResponse for GroundTruth {
    fn config(&self) -> &ArrayConfig {
        GroundTruth::config(self)
    }
    fn response(&self, el: Element) -> Complex64 {
        GroundTruth::response(self, el)
    }
}

impl ElementResponse for CalibrationEstimate {
    fn config(&self) -> &ArrayConfig {
        CalibrationEstimate::config(self)
    }
    fn response(&self, el: Element) -> Complex64 {
        CalibrationEstimate::response(self, el)
    }
}

/// `|sum_i r(i, c_i) e^{j i pi sin(theta)}|^2`.
pub fn codeword_power<A: ElementResponse + ?Sized>(
    array: &A,
    codeword: &Codeword,
    theta: f64,
) -> f64 {
    let progression = PI * theta.sin();
    codeword
        .phase_indices
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            array.response(Element::new(i, k)) * Complex64::from_polar(1.0, i as f64 * progression)
        })
        .sum::<Complex64>()
        .norm_sqr()
}

pub fn ideal_power(config: &ArrayConfig, codeword: &Codeword, theta: f64) -> f64 {
    codeword_power(&IdealArray(*config), codeword, theta)
}

pub fn estimated_power(codeword: &Codeword, estimate: &CalibrationEstimate, theta: f64) -> f64 {
    codeword_power(estimate, codeword, theta)
}

pub fn true_power(codeword: &Codeword, gt: &GroundTruth, theta: f64) -> f64 {
    codeword_power(gt, codeword, theta)
}

fn check_direction(deg: f64) -> Result<()> {
    if deg.abs() <= 90.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "direction {deg} deg is outside [-90, 90]"
        )))
    }
}

/// Visits every codeword in lexicographic order. Antennas before `first_free`
/// stay at setting 0.
fn for_each_codeword(config: &ArrayConfig, first_free: usize, mut visit: impl FnMut(&Codeword)) {
    let n_k = config.n_phases();
    let mut cw = Codeword::zeros(config);
    loop {
        visit(&cw);
        let mut pos = config.n_antennas;
        loop {
            if pos == first_free {
                return;
            }
            pos -= 1;
            cw.phase_indices[pos] += 1;
            if cw.phase_indices[pos] < n_k {
                break;
            }
            cw.phase_indices[pos] = 0;
        }
    }
}

fn best_codeword(
    config: &ArrayConfig,
    first_free: usize,
    power_fn: &impl Fn(&Codeword, f64) -> f64,
    theta: f64,
) -> (Codeword, f64) {
    let mut best = (Codeword::zeros(config), f64::NEG_INFINITY);
    for_each_codeword(config, first_free, |cw| {
        let p = power_fn(cw, theta);
        if p > best.1 {
            best = (cw.clone(), p);
        }
    });
    best
}

/// For each direction, the codeword maximizing `power_fn`, searched over all
/// codewords with antenna 0 at setting 0. Ties go to the lexicographically
/// smallest codeword.
pub fn design_codebook(
    config: &ArrayConfig,
    power_fn: impl Fn(&Codeword, f64) -> f64,
    directions_deg: &[f64],
) -> Result<Vec<Codeword>> {
    config.validate()?;
    directions_deg
        .iter()
        .map(|&deg| {
            check_direction(deg)?;
            Ok(best_codeword(config, 1, &power_fn, deg.to_radians()).0)
        })
        .collect()
}

/// Unrestricted search over every codeword for one direction.
pub fn exhaustive_best(
    config: &ArrayConfig,
    power_fn: impl Fn(&Codeword, f64) -> f64,
    direction_deg: f64,
) -> Result<(Codeword, f64)> {
    config.validate()?;
    check_direction(direction_deg)?;
    Ok(best_codeword(
        config,
        0,
        &power_fn,
        direction_deg.to_radians(),
    ))
}

/// Codebook designed on the error-free pattern.
pub fn uncalibrated_codebook(
    config: &ArrayConfig,
    directions_deg: &[f64],
) -> Result<Vec<Codeword>> {
    design_codebook(config, |cw, t| ideal_power(config, cw, t), directions_deg)
}

/// Codebook designed on an estimated pattern.
pub fn calibrated_codebook(
    estimate: &CalibrationEstimate,
    directions_deg: &[f64],
) -> Result<Vec<Codeword>> {
    design_codebook(
        estimate.config(),
        |cw, t| estimated_power(cw, estimate, t),
        directions_deg,
    )
}

/// Area-uniform angles: `asin(u)` at the midpoints of `n` equal cells of
/// `u` in `[-1, 1]`.
pub fn sphere_directions(n: usize) -> Result<Vec<f64>> {
    if n < 100 {
        return Err(Error::Config(format!(
            "need at least 100 sphere samples, got {n}"
        )));
    }
    Ok((0..n)
        .map(|s| (-1.0 + (2 * s + 1) as f64 / n as f64).asin())
        .collect())
}

/// Largest EIRP any array drawn from the error model can produce:
/// `(N * b_max)^2`.
pub fn eirp_scale(config: &ArrayConfig, max_amplitude: f64) -> f64 {
    (config.n_antennas as f64 * max_amplitude).powi(2)
}

/// Best-codeword true power at each angle, divided by `scale`, in dB.
pub fn coverage_db(
    gt: &GroundTruth,
    codebook: &[Codeword],
    thetas: &[f64],
    scale: f64,
) -> Result<Vec<f64>> {
    if codebook.is_empty() {
        return Err(Error::Config("empty codebook".into()));
    }
    Ok(thetas
        .iter()
        .map(|&t| {
            let p = codebook
                .iter()
                .map(|cw| true_power(cw, gt, t))
                .fold(0.0, f64::max);
            10.0 * (p / scale).log10()
        })
        .collect())
}

/// Empirical quantile of sorted samples: the smallest sample `v`
/// with `F(v) >= q`.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let idx = ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
    sorted[idx]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub scaled_eirp_db: f64,
    pub cum_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EirpReport {
    pub directions_deg: Vec<f64>,
    /// Best-codeword scaled EIRP per direction, averaged in linear scale over
    /// instances, in dB.
    pub mean_coverage_db: Vec<f64>,
    pub cdf: Vec<CdfPoint>,
    /// 50th percentile of the pooled samples.
    pub p50_db: f64,
    /// 99th percentile of the pooled samples.
    pub p99_db: f64,
}

impl EirpReport {
    /// Pools per-instance coverage samples, each taken on `thetas`. Pooling
    /// equal-sized instances is the instance-averaged CDF.
    pub fn from_coverage(thetas: &[f64], coverage: &[Vec<f64>]) -> Result<Self> {
        if coverage.is_empty() {
            return Err(Error::EmptyInput);
        }
        if coverage.iter().any(|c| c.len() != thetas.len()) {
            return Err(Error::Config(
                "coverage length differs from direction count".into(),
            ));
        }
        let mut mean = vec![0.0; thetas.len()];
        let mut pooled = Vec::with_capacity(thetas.len() * coverage.len());
        for c in coverage {
            for (m, &v) in mean.iter_mut().zip(c) {
                *m += 10f64.powf(v / 10.0);
            }
            pooled.extend_from_slice(c);
        }
        pooled.sort_by(f64::total_cmp);
        let n = pooled.len() as f64;
        let cdf = pooled
            .iter()
            .enumerate()
            .map(|(i, &v)| CdfPoint {
                scaled_eirp_db: v,
                cum_prob: (i + 1) as f64 / n,
            })
            .collect();
        Ok(Self {
            directions_deg: thetas.iter().map(|t| t.to_degrees()).collect(),
            mean_coverage_db: mean
                .iter()
                .map(|m| 10.0 * (m / coverage.len() as f64).log10())
                .collect(),
            cdf,
            p50_db: quantile(&pooled, 0.50),
            p99_db: quantile(&pooled, 0.99),
        })
    }

    /// CDF value at `x`, the fraction of pooled samples `<= x`.
    pub fn cdf_at(&self, x: f64) -> f64 {
        let n = self.cdf.partition_point(|p| p.scaled_eirp_db <= x);
        n as f64 / self.cdf.len() as f64
    }
}

/// One array instance with the codebook to evaluate on it.
#[derive(Debug, Clone)]
pub struct EirpInstance {
    pub truth: GroundTruth,
    pub codebook: Vec<Codeword>,
}

/// Instance-averaged coverage CDF of the given codebooks on their arrays.
pub fn eirp_cdf(
    instances: &[EirpInstance],
    sphere_samples: usize,
    scale: f64,
) -> Result<EirpReport> {
    if instances.is_empty() {
        return Err(Error::EmptyInput);
    }
    let thetas = sphere_directions(sphere_samples)?;
    let coverage = instances
        .iter()
        .map(|inst| coverage_db(&inst.truth, &inst.codebook, &thetas, scale))
        .collect::<Result<Vec<_>>>()?;
    EirpReport::from_coverage(&thetas, &coverage)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{db_to_amplitude, generate_ground_truth, ErrorSpec};
    use crate::calibrate::References;
    use crate::rng::stream_rng;
    use proptest::prelude::*;
    use rand::Rng;
    use std::f64::consts::FRAC_PI_2;

    fn cfg() -> ArrayConfig {
        ArrayConfig::default()
    }

    fn cw(v: &[usize]) -> Codeword {
        Codeword::new(&cfg(), v.to_vec()).unwrap()
    }

    #[test]
    fn ideal_power_examples() {
        assert!((ideal_power(&cfg(), &cw(&[0, 0, 0, 0]), 0.0) - 16.0).abs() < 1e-12);
        assert!(ideal_power(&cfg(), &cw(&[0, 4, 0, 4]), 0.0).abs() < 1e-12);
        assert!(ideal_power(&cfg(), &cw(&[0, 0, 0, 0]), FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn codeword_validation() {
        assert!(Codeword::new(&cfg(), vec![0, 0, 0]).is_err());
        assert!(Codeword::new(&cfg(), vec![0, 0, 0, 8]).is_err());
    }

    #[test]
    fn estimated_power_examples() {
        let ideal = CalibrationEstimate::ideal(cfg());
        for t in [-1.2, -0.3, 0.0, 0.7, 1.5] {
            for v in [[0, 0, 0, 0], [0, 3, 5, 7], [1, 2, 3, 4]] {
                assert!(
                    (estimated_power(&cw(&v), &ideal, t) - ideal_power(&cfg(), &cw(&v), t)).abs()
                        < 1e-12
                );
            }
        }
        let half = CalibrationEstimate::from_parts(
            cfg(),
            vec![0.5; 32],
            ideal.phases().to_vec(),
            References {
                r1: 0,
                r2: 0,
                r3: 0,
            },
        )
        .unwrap();
        assert!((estimated_power(&cw(&[0, 0, 0, 0]), &half, 0.0) - 4.0).abs() < 1e-12);
    }

    fn scalar_power(b: &[f64], phi: &[f64], n_k: usize, c: &[usize], theta: f64) -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for (i, &k) in c.iter().enumerate() {
            let a = phi[i * n_k + k] + i as f64 * PI * theta.sin();
            re += b[i * n_k + k] * a.cos();
            im += b[i * n_k + k] * a.sin();
        }
        re * re + im * im
    }

    #[test]
    fn powers_match_scalar_evaluation() {
        let gt = generate_ground_truth(cfg(), &ErrorSpec::default(), 9).unwrap();
        let est = CalibrationEstimate::from_parts(
            cfg(),
            gt.amplitudes().to_vec(),
            gt.phases().to_vec(),
            References {
                r1: 0,
                r2: 0,
                r3: 0,
            },
        )
        .unwrap();
        let mut rng = stream_rng(3, &[]);
        for _ in 0..200 {
            let c: Vec<usize> = (0..4).map(|_| rng.random_range(0..8)).collect();
            let t = rng.random_range(-FRAC_PI_2..=FRAC_PI_2);
            let want = scalar_power(gt.amplitudes(), gt.phases(), 8, &c, t);
            assert!((true_power(&cw(&c), &gt, t) - want).abs() < 1e-12);
            let want = scalar_power(est.amplitudes(), est.phases(), 8, &c, t);
            assert!((estimated_power(&cw(&c), &est, t) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn true_power_examples() {
        let gt = GroundTruth::ideal(cfg());
        assert!(
            (true_power(&cw(&[1, 5, 2, 0]), &gt, 0.4)
                - ideal_power(&cfg(), &cw(&[1, 5, 2, 0]), 0.4))
            .abs()
                < 1e-12
        );
        let a = db_to_amplitude(1.5);
        let phi = GroundTruth::ideal(cfg()).phases().to_vec();
        let hot = GroundTruth::from_parts(cfg(), vec![a; 32], phi).unwrap();
        let want = eirp_scale(&cfg(), ErrorSpec::default().max_amplitude());
        assert!((true_power(&cw(&[0, 0, 0, 0]), &hot, 0.0) - want).abs() < 1e-12);
        assert!((want - (4.0 * a).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn codebook_examples() {
        let book = uncalibrated_codebook(&cfg(), &[0.0, 90.0]).unwrap();
        assert_eq!(book[0].phase_indices, vec![0, 0, 0, 0]);
        assert_eq!(book[1].phase_indices, vec![0, 4, 0, 4]);
        assert!((ideal_power(&cfg(), &book[1], FRAC_PI_2) - 16.0).abs() < 1e-12);
        assert!(design_codebook(&cfg(), |_, _| 0.0, &[91.0]).is_err());
    }

    #[test]
    fn ties_pick_smallest_codeword() {
        let book = design_codebook(&cfg(), |_, _| 1.0, &[0.0]).unwrap();
        assert_eq!(book[0], Codeword::zeros(&cfg()));
    }

    #[test]
    fn visits_every_codeword_once() {
        let config = ArrayConfig::new(3, 3).unwrap();
        let mut seen = Vec::new();
        for_each_codeword(&config, 0, |c| seen.push(c.clone()));
        assert_eq!(seen.len(), 512);
        assert!(seen.windows(2).all(|w| w[0] < w[1]));
        let mut restricted = 0;
        for_each_codeword(&config, 1, |c| {
            assert_eq!(c.phase_indices[0], 0);
            restricted += 1;
        });
        assert_eq!(restricted, 64);
    }

    #[test]
    fn chosen_codewords_beat_a_rescan() {
        let book = uncalibrated_codebook(&cfg(), &DEFAULT_DIRECTIONS_DEG).unwrap();
        for (c, &deg) in book.iter().zip(&DEFAULT_DIRECTIONS_DEG) {
            let t = deg.to_radians();
            let p = ideal_power(&cfg(), c, t);
            for_each_codeword(&cfg(), 0, |other| {
                assert!(p >= ideal_power(&cfg(), other, t) - 1e-12)
            });
        }
    }

    #[test]
    fn sphere_directions_are_area_uniform() {
        let t = sphere_directions(1000).unwrap();
        assert_eq!(t.len(), 1000);
        assert!(t.windows(2).all(|w| w[0] < w[1]));
        assert!(t.iter().all(|x| x.abs() < FRAC_PI_2));
        let mean_sin: f64 = t.iter().map(|x| x.sin()).sum::<f64>() / 1000.0;
        assert!(mean_sin.abs() < 1e-12);
        assert!(sphere_directions(99).is_err());
    }

    #[test]
    fn zero_error_peak_is_headroom_below_scale() {
        let gt = GroundTruth::ideal(cfg());
        let scale = eirp_scale(&cfg(), ErrorSpec::default().max_amplitude());
        let book = uncalibrated_codebook(&cfg(), &DEFAULT_DIRECTIONS_DEG).unwrap();
        let inst = EirpInstance {
            truth: gt,
            codebook: book,
        };
        let r = eirp_cdf(&[inst], 1000, scale).unwrap();
        let peak = r.cdf.last().unwrap().scaled_eirp_db;
        // The 1.5 dB amplitude headroom is 1.5 dB of power headroom as well:
        // 10 log10(16 / (16 * 10^0.15)).
        assert!(peak <= -1.5 + 1e-12);
        assert!(peak > -1.6);
    }

    #[test]
    fn calibrated_equals_uncalibrated_without_errors() {
        let a = uncalibrated_codebook(&cfg(), &DEFAULT_DIRECTIONS_DEG).unwrap();
        let b = calibrated_codebook(&CalibrationEstimate::ideal(cfg()), &DEFAULT_DIRECTIONS_DEG)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn quantile_convention() {
        let s: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(quantile(&s, 0.5), 50.0);
        assert_eq!(quantile(&s, 0.01), 1.0);
        assert_eq!(quantile(&s, 0.0), 1.0);
        assert_eq!(quantile(&s, 1.0), 100.0);
    }

    #[test]
    fn report_rejects_empty() {
        assert!(matches!(eirp_cdf(&[], 200, 1.0), Err(Error::EmptyInput)));
    }

    proptest! {
        #[test]
        fn exact_estimate_reproduces_ideal(c in proptest::collection::vec(0usize..8, 4), t in -FRAC_PI_2..FRAC_PI_2) {
            let ideal = CalibrationEstimate::ideal(cfg());
            let c = cw(&c);
            prop_assert!((estimated_power(&c, &ideal, t) - ideal_power(&cfg(), &c, t)).abs() < 1e-12);
        }

        #[test]
        fn power_is_invariant_under_global_codeword_rotation(
            c in proptest::collection::vec(0usize..8, 4), shift in 0usize..8, t in -FRAC_PI_2..FRAC_PI_2,
        ) {
            let rotated = cw(&c.iter().map(|k| (k + shift) % 8).collect::<Vec<_>>());
            let c = cw(&c);
            prop_assert!((ideal_power(&cfg(), &c, t) - ideal_power(&cfg(), &rotated, t)).abs() < 1e-9);
        }

        #[test]
        fn cdf_is_monotone(seed in 0u64..1000) {
            let gt = generate_ground_truth(cfg(), &ErrorSpec::default(), seed).unwrap();
            let book = uncalibrated_codebook(&cfg(), &DEFAULT_DIRECTIONS_DEG).unwrap();
            let scale = eirp_scale(&cfg(), ErrorSpec::default().max_amplitude());
            let r = eirp_cdf(&[EirpInstance { truth: gt, codebook: book }], 200, scale).unwrap();
            prop_assert!(r.cdf.windows(2).all(|w| w[0].scaled_eirp_db <= w[1].scaled_eirp_db && w[0].cum_prob < w[1].cum_prob));
            prop_assert!(r.cdf.iter().all(|p| p.scaled_eirp_db <= 1e-12));
            prop_assert!(r.p99_db >= r.p50_db);
        }
    }
}
