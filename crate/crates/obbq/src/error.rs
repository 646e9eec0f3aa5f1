use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

/// One attempted λ step of a continuation run, kept for diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepAttempt {
    pub lambda_from: f64,
    pub lambda_to: f64,
    pub iterations: usize,
    pub final_residual: f64,
    pub accepted: bool,
    pub reason: String,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("sub-domain half width {requested} exceeds source half width {available}")]
    DomainMismatch { requested: f64, available: f64 },
    #[error("homogeneous data evaluated at the origin")]
    OriginEvaluation,
    #[error("velocity data is not divergence free: weak residual {residual:.3e} > {tolerance:.3e}")]
    NotDivergenceFree { residual: f64, tolerance: f64 },
    #[error("heat-kernel truncation radius {radius} is below 6 standard deviations")]
    QuadratureUnderflow { radius: f64 },
    #[error("pressure Poisson solve failed: {0}")]
    PoissonDivergence(String),
    #[error("gradient norm vanishes")]
    ZeroGradient,
    #[error("inner Krylov solve stagnated at relative residual {residual:.3e} after {iterations} iterations")]
    InnerSolveFailure { residual: f64, iterations: usize },
    #[error("non-finite value in iterate")]
    NonFiniteIterate,
    #[error("Picard iteration diverged at lambda {lambda}: {reason}")]
    PicardDiverged { lambda: f64, iterations: usize, residual: f64, reason: String },
    #[error("continuation stalled at lambda {lambda} (step {step:.3e} below minimum){}", radius_note(.radius))]
    ContinuationStalled { lambda: f64, step: f64, radius: Option<f64>, history: Vec<StepAttempt> },
    #[error("sweep diverged at R={radius}: energy grew by factor {factor:.3} (limit {limit})")]
    SweepDiverged { radius: f64, factor: f64, limit: f64 },
    #[error("time must be positive, got {0}")]
    TimeNonpositive(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed field file: {0}")]
    Format(String),
    #[error("unsupported field file version {0}")]
    Version(u8),
}

fn radius_note(radius: &Option<f64>) -> String {
    radius.map(|r| format!(" at R={r}")).unwrap_or_default()
}

impl Error {
    /// Stable machine-readable name of the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::GridMismatch => "GridMismatch",
            Error::DomainMismatch { .. } => "DomainMismatch",
            Error::OriginEvaluation => "OriginEvaluation",
            Error::NotDivergenceFree { .. } => "NotDivergenceFree",
            Error::QuadratureUnderflow { .. } => "QuadratureUnderflow",
            Error::PoissonDivergence(_) => "PoissonDivergence",
            Error::ZeroGradient => "ZeroGradient",
            Error::InnerSolveFailure { .. } => "InnerSolveFailure",
            Error::NonFiniteIterate => "NonFiniteIterate",
            Error::PicardDiverged { .. } => "PicardDiverged",
            Error::ContinuationStalled { .. } => "ContinuationStalled",
            Error::SweepDiverged { .. } => "SweepDiverged",
            Error::TimeNonpositive(_) => "TimeNonpositive",
            Error::InvalidInput(_) => "InvalidInput",
            Error::Config(_) => "ConfigError",
            Error::Io { .. } => "IoError",
            Error::Format(_) => "FormatError",
            Error::Version(_) => "VersionError",
        }
    }

    /// Process exit status for this kind of failure. Status 2 is kept for
    /// inconclusive sweeps and 9 for failed verification.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidInput(_) => 3,
            Error::Io { .. } => 4,
            Error::Format(_) | Error::Version(_) => 5,
            Error::ContinuationStalled { .. } => 6,
            Error::PicardDiverged { .. } => 7,
            Error::SweepDiverged { .. } => 8,
            Error::InnerSolveFailure { .. } | Error::NonFiniteIterate | Error::PoissonDivergence(_) => 10,
            Error::InvalidGrid(_) | Error::GridMismatch | Error::DomainMismatch { .. } => 11,
            Error::OriginEvaluation | Error::NotDivergenceFree { .. } | Error::QuadratureUnderflow { .. } => 12,
            Error::ZeroGradient | Error::TimeNonpositive(_) => 13,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
