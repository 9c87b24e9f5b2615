use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unstable trap parameters: {0}")]
    UnstableParameters(String),

    #[error("position {position:?} m lies outside the modeled quadrupole region")]
    OutOfRegion { position: [f64; 3] },

    #[error("numerical blow-up at t = {time:.6e} s: ion {ion} speed {speed:.3e} m/s")]
    BlowUp { time: f64, ion: usize, speed: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("too few ions: need at least {needed}, have {have}")]
    TooFewIons { needed: usize, have: usize },

    #[error("window [{lo:.1}, {hi:.1}] Hz does not cover at least 3 grid points")]
    WindowOutsideGrid { lo: f64, hi: f64 },

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("out of calibration range: {0}")]
    OutOfCalibrationRange(String),

    #[error("control run lost {lost_fraction:.1}% of ions (limit 10%)")]
    ControlRunFailure { lost_fraction: f64 },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("validation error for `{key}`: {message}")]
    Validation { key: String, message: String },

    #[error(
        "configuration digest mismatch: record has {recorded}, config now hashes to {current}"
    )]
    DigestMismatch { recorded: String, current: String },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("output directory {0} is locked by another run")]
    Locked(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors raised while reading or validating configuration.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::Parse { .. } | Error::Validation { .. })
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
