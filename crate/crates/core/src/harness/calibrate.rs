//! Dilution-ladder calibration run with response curves.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::pipeline::{ladder_concentrations, run_ladder, Calibration};
use super::plot;
use crate::error::Result;
use crate::hplc::{measure, Chromatogram, HplcProfile};
use crate::mixture::{AnalyteId, AnalyteRegistry, SolutionState};
use crate::rng::sub_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub seed: u64,
    pub calibration: Calibration,
    pub concentrations: Vec<f64>,
    /// Three-analyte reference sample at 7 / 5 / 8.5 mg/mL.
    pub reference: Chromatogram,
    pub profile: HplcProfile,
}

pub fn run_calibration(cfg: &ExperimentConfig) -> Result<CalibrationReport> {
    cfg.validate()?;
    let seed = cfg.seeds[0];
    let profile = HplcProfile::phenols();
    let ids = AnalyteRegistry::phenols().ids();
    let calibration = run_ladder(&ids, &profile, &cfg.ladder, &cfg.noise, seed)?;
    let sample = SolutionState::from_concentrations(
        100.0,
        &[
            (AnalyteId(1), 7.0),
            (AnalyteId(2), 5.0),
            (AnalyteId(3), 8.5),
        ],
    );
    let reference = measure(
        &sample,
        &profile,
        &cfg.noise.hplc(),
        sub_seed(seed, &[u64::MAX]),
    )?;
    Ok(CalibrationReport {
        seed,
        concentrations: ladder_concentrations(&cfg.ladder),
        calibration,
        reference,
        profile,
    })
}

impl CalibrationReport {
    pub fn points_csv(&self) -> String {
        let mut out = String::from("analyte,nominal_mg_per_ml,area,linear_fit_area\n");
        for p in &self.calibration.points {
            let slope = self.calibration.curve.slopes[&p.analyte];
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{:.6}",
                p.analyte,
                p.nominal_mg_per_ml,
                p.area,
                p.nominal_mg_per_ml / slope
            );
        }
        out
    }

    pub fn summary_json(&self) -> String {
        #[derive(Serialize)]
        struct Row {
            analyte: AnalyteId,
            slope: f64,
            inverse_gain: f64,
            relative_error: f64,
        }
        let rows: Vec<Row> = self
            .profile
            .peaks()
            .iter()
            .map(|p| {
                let s = self.calibration.curve.slopes[&p.analyte];
                Row {
                    analyte: p.analyte,
                    slope: s,
                    inverse_gain: 1.0 / p.gain,
                    relative_error: s * p.gain - 1.0,
                }
            })
            .collect();
        serde_json::to_string_pretty(&rows).expect("summary serializes")
    }

    pub fn curves_svg(&self) -> String {
        let mut series = Vec::new();
        for p in self.profile.peaks() {
            let pts: Vec<(f64, f64)> = self
                .calibration
                .points
                .iter()
                .filter(|x| x.analyte == p.analyte && x.nominal_mg_per_ml <= 6.0 + 1e-9)
                .map(|x| (x.nominal_mg_per_ml, x.area))
                .collect();
            series.push((format!("analyte {}", p.analyte), pts));
        }
        plot::curves(
            &series,
            "Calibration ladder",
            "concentration (mg/mL)",
            "peak area (AU s)",
        )
    }

    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("calibration_points.csv"), self.points_csv())?;
        std::fs::write(
            dir.join("calibration_curve.json"),
            self.calibration.curve.to_json(),
        )?;
        std::fs::write(dir.join("calibration_summary.json"), self.summary_json())?;
        std::fs::write(dir.join("calibration_curves.svg"), self.curves_svg())?;
        std::fs::write(
            dir.join("chromatogram_reference.csv"),
            self.reference.to_csv(),
        )?;
        std::fs::write(
            dir.join("chromatogram_reference.svg"),
            self.reference.to_svg("7 / 5 / 8.5 mg/mL"),
        )?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::NoiseSettings;

    #[test]
    fn noise_free_calibration_outputs() {
        let cfg = ExperimentConfig {
            noise: NoiseSettings::off(),
            ..ExperimentConfig::default()
        };
        let r = run_calibration(&cfg).unwrap();
        assert_eq!(r.concentrations.len(), 12);
        assert_eq!(r.points_csv().lines().count(), 1 + 36);
        let dir = tempfile::tempdir().unwrap();
        r.write_outputs(dir.path()).unwrap();
        assert!(dir.path().join("calibration_curves.svg").exists());
    }
}
