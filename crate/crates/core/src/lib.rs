//! Power-only calibration of phased arrays whose gain and phase errors depend
//! on the phase-shifter setting.
//!
//! An array of `N` antennas with `Q`-bit phase shifters has `N * 2^Q`
//! elements `(i, k)`, each with an unknown amplitude `b_ik` and phase
//! `phi_ik`. [`calibrate::run_calibration`] estimates all of them from
//! `3 N 2^Q - 3` scalar power readings, [`refine::refine`] polishes the
//! estimate by least squares on the same readings, and [`eirp`] turns
//! estimates into beam codebooks. [`rev`] is the classic rotating-element
//! baseline.
//!
//! ```
//! use phasecal_core::{calibrate_simulated, generate_ground_truth, ArrayConfig, ErrorSpec, NoiseModel};
//!
//! let gt = generate_ground_truth(ArrayConfig::default(), &ErrorSpec::default(), 42).unwrap();
//! let (estimate, records) = calibrate_simulated(&gt, &NoiseModel::noiseless()).unwrap();
//! assert_eq!(records.len(), 93);
//! assert_eq!(estimate.phases()[0], 0.0);
//! ```

pub mod array;
pub mod calibrate;
pub mod eirp;
pub mod error;
pub mod experiment;
pub mod export;
pub mod measurement;
pub mod metrics;
pub mod refine;
pub mod rev;
pub mod rng;

pub use array::{
    generate_ground_truth, ArrayConfig, ErrorSpec, GroundTruth, Interval, TruthConfig,
};
pub use calibrate::{
    calibrate_simulated, run_calibration, CalibrationEstimate, CalibrationWarning, References,
};
pub use eirp::{design_codebook, eirp_cdf, Codeword, EirpReport, DEFAULT_DIRECTIONS_DEG};
pub use error::{Error, Result};
pub use experiment::{Experiment, RunConfig};
pub use measurement::{
    build_plan, plan_size, Element, MeasurementKind, MeasurementPlan, MeasurementRecord,
    NoiseModel, PowerMeter, Probe, SimulatedMeter,
};
pub use metrics::{
    aggregate, gain_error_db, wrap_phase, wrapped_phase_error, ErrorStats, InstanceErrors,
};
pub use refine::{refine, RefineOutcome, RefineSettings};
pub use rev::{rev_calibrate, RevEstimator, RevResult, RevSettings};
