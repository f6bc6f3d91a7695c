//! Finds the noise scale at which the pooled 3σ of the validation
//! differential error is 0.30 mg/mL. The result is frozen as
//! `CALIBRATED_NOISE_SCALE`.
//!
//! cargo run --release -p volchem-core --example calibrate_noise

use volchem_core::harness::validate::{calibrate_noise_scale, differential_three_sigma};
use volchem_core::harness::ExperimentConfig;

pub const TARGET_THREE_SIGMA: f64 = 0.30;
pub const CALIBRATION_SEEDS: std::ops::Range<u64> = 1000..1064;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = ExperimentConfig::default();
    let seeds: Vec<u64> = CALIBRATION_SEEDS.collect();
    for k in [0.5, 1.0, 2.0, 4.0] {
        println!(
            "scale {k:>4}: 3 sigma {:.4}",
            differential_three_sigma(&base, &seeds, k)?
        );
    }
    let k = calibrate_noise_scale(&base, &seeds, TARGET_THREE_SIGMA, 1e-4)?;
    println!("calibrated scale {k:.4}");
    Ok(())
}
