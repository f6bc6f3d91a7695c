//! End-to-end experiments: calibration, random-vector validation and the
//! overlaid-digit demonstration.

pub mod calibrate;
pub mod config;
pub mod digits;
pub mod idx;
pub mod mnist;
pub mod pipeline;
pub mod plot;
pub mod stats;
pub mod validate;

pub use calibrate::{run_calibration, CalibrationReport};
pub use config::{ExperimentConfig, ExperimentKind, NoiseSettings, CALIBRATED_NOISE_SCALE};
pub use idx::ingest_idx;
pub use mnist::{run_mnist, MnistReport};
pub use validate::{calibrate_noise_scale, run_validation, ValidationReport};
