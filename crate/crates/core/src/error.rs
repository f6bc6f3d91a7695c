use thiserror::Error;

use crate::mixture::{AnalyteId, Location, WellAddress};

/// Everything that can go wrong between encoding and readout.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("well {well} holds {available_ul} uL, cannot draw {requested_ul} uL")]
    InsufficientVolume {
        well: WellAddress,
        available_ul: f64,
        requested_ul: f64,
    },
    #[error("well {well} would hold {would_hold_ul} uL, capacity is {capacity_ul} uL")]
    WellOverflow {
        well: WellAddress,
        would_hold_ul: f64,
        capacity_ul: f64,
    },
    #[error("well {0} is outside the plate")]
    OutOfBounds(WellAddress),
    #[error("solution is empty; concentration undefined")]
    EmptySolution,
    #[error("{n_bits} bits do not fit on a {rows}x{cols} plate")]
    PlateTooSmall {
        n_bits: usize,
        rows: usize,
        cols: usize,
    },
    #[error("analyte {0} is assigned to more than one dataset")]
    AnalyteCollision(AnalyteId),
    #[error("analyte {0} is not registered")]
    UnknownAnalyte(AnalyteId),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("well {well} needs {required_ul} uL across the program but holds {available_ul} uL")]
    BudgetExceeded {
        well: WellAddress,
        required_ul: f64,
        available_ul: f64,
    },
    #[error("pool volume {pool_ul} uL is smaller than the weighted draw sum {required_ul} uL")]
    InfeasiblePool { pool_ul: f64, required_ul: f64 },
    #[error("invalid location for this instruction: {0}")]
    BadLocation(Location),
    #[error("integration window [{start_min}, {end_min}] min lies outside the {run_min} min run")]
    WindowOutOfRange {
        start_min: f64,
        end_min: f64,
        run_min: f64,
    },
    #[error("analytes {0} and {1} elute too close together to resolve")]
    Unresolvable(AnalyteId, AnalyteId),
    #[error("calibration series has no usable signal")]
    DegenerateSeries,
    #[error("calibration needs at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("no calibration for analyte {0}")]
    MissingCalibration(AnalyteId),
    #[error("pool key sets differ for analyte {0}")]
    KeyMismatch(AnalyteId),
    #[error("bad IDX magic number {0:#010x}")]
    BadMagic(u32),
    #[error("IDX file is truncated")]
    TruncatedFile,
    #[error("missing fixture: {0}")]
    MissingFixtures(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Stable identifier used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InsufficientVolume { .. } => "InsufficientVolume",
            Error::WellOverflow { .. } => "WellOverflow",
            Error::OutOfBounds(_) => "OutOfBounds",
            Error::EmptySolution => "EmptySolution",
            Error::PlateTooSmall { .. } => "PlateTooSmall",
            Error::AnalyteCollision(_) => "AnalyteCollision",
            Error::UnknownAnalyte(_) => "UnknownAnalyte",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::EmptyInput(_) => "EmptyInput",
            Error::BudgetExceeded { .. } => "BudgetExceeded",
            Error::InfeasiblePool { .. } => "InfeasiblePool",
            Error::BadLocation(_) => "BadLocation",
            Error::WindowOutOfRange { .. } => "WindowOutOfRange",
            Error::Unresolvable(..) => "Unresolvable",
            Error::DegenerateSeries => "DegenerateSeries",
            Error::InsufficientPoints { .. } => "InsufficientPoints",
            Error::MissingCalibration(_) => "MissingCalibration",
            Error::KeyMismatch(_) => "KeyMismatch",
            Error::BadMagic(_) => "BadMagic",
            Error::TruncatedFile => "TruncatedFile",
            Error::MissingFixtures(_) => "MissingFixtures",
            Error::Parse(_) => "Parse",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
