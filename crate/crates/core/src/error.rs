use std::path::PathBuf;

use thiserror::Error;

use crate::measurement::Element;

/// Errors produced by the calibration library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("index out of range: {what} = {index}, limit {limit}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("pair probe uses the same element twice: {0}")]
    IdenticalPair(Element),

    #[error("element {0} measured zero power; antenna is effectively off")]
    DegenerateElement(Element),

    #[error("individual powers must be positive, got {m_a} and {m_b}")]
    DegeneratePower { m_a: f64, m_b: f64 },

    #[error("reference phases {ref1:.4} and {ref2:.4} rad are too close to collinear (|sin| = {sin_sep:.4})")]
    ReferenceDegeneracy { ref1: f64, ref2: f64, sin_sep: f64 },

    #[error("measurement log is missing {0}")]
    IncompletePlan(String),

    #[error("true amplitude must be positive, got {0}")]
    NonPositiveAmplitude(f64),

    #[error("no instances to aggregate")]
    EmptyInput,

    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
