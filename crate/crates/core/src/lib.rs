//! Simulator for linear classifiers computed by mixing chemicals.
//!
//! Binary data is written as analyte concentrations on a microplate,
//! classifier weights become pipetting volumes, pooled wells are read by a
//! simulated HPLC, and the sign of each differential concentration is the
//! class label.

pub mod classifier;
pub mod compiler;
pub mod encoder;
pub mod error;
pub mod harness;
pub mod hplc;
pub mod mixture;
pub mod readout;
pub mod rng;
pub mod robot;

pub use classifier::{threshold, ClassLabel, TrainConfig, TrainedClassifier};
pub use compiler::{
    check_budget, compile, CompileConfig, CostReport, InstructionSequence, PoolWells,
};
pub use encoder::{emit_write_instructions, layout, Dataset, EncodingPlan};
pub use error::{Error, Result};
pub use hplc::{measure, quantify, CalibrationCurve, Chromatogram, HplcProfile, InjectionModel};
pub use mixture::{
    AnalyteId, AnalyteRegistry, Deck, Location, PlateDims, PlateState, SolutionState, WellAddress,
};
pub use readout::{differential, DifferentialResult, PoolPair};
pub use robot::{execute, ExecutionLog, NoiseModel};
