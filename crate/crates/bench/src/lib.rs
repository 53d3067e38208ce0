//! Shared fixtures for the benchmarks.

use phasecal_core::{
    calibrate_simulated, generate_ground_truth, ArrayConfig, CalibrationEstimate, ErrorSpec,
    GroundTruth, MeasurementRecord, NoiseModel,
};

/// A default-spec array with a noisy calibration log.
pub struct Fixture {
    pub truth: GroundTruth,
    pub estimate: CalibrationEstimate,
    pub records: Vec<MeasurementRecord>,
}

pub fn fixture(n_antennas: usize, q_bits: u32, snr_db: f64, seed: u64) -> Fixture {
    let config = ArrayConfig::new(n_antennas, q_bits).expect("valid array");
    let truth = generate_ground_truth(config, &ErrorSpec::default(), seed).expect("valid spec");
    let (estimate, records) =
        calibrate_simulated(&truth, &NoiseModel::new(snr_db, seed)).expect("calibrates");
    Fixture {
        truth,
        estimate,
        records,
    }
}
