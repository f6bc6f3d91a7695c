//! Experiment configuration, loadable from TOML.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::compiler::CompileConfig;
use crate::encoder::DEFAULT_WRITE_VOLUME_UL;
use crate::error::{Error, Result};
use crate::hplc::InjectionModel;
use crate::mixture::DEFAULT_STOCK_MG_PER_ML;
use crate::robot::NoiseModel;

/// Multiplier on the default noise levels that makes the pooled 3σ of the
/// validation differential error come out at 0.30 mg/mL. Produced by
/// [`super::validate::calibrate_noise_scale`].
pub const CALIBRATED_NOISE_SCALE: f64 = 1.4622;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Mnist,
    #[default]
    Validate,
    Calibrate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSettings {
    pub enabled: bool,
    /// Multiplies every cv below; `None` uses the calibrated scale.
    pub scale: Option<f64>,
    pub pipette: NoiseModel,
    pub injection: InjectionModel,
}

impl Default for NoiseSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            scale: None,
            pipette: NoiseModel::default(),
            injection: InjectionModel::default(),
        }
    }
}

impl NoiseSettings {
    pub fn off() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn scaled(k: f64) -> Self {
        Self {
            scale: Some(k),
            ..Self::default()
        }
    }

    pub fn calibrated() -> Self {
        Self::default()
    }

    pub fn scale(&self) -> f64 {
        self.scale.unwrap_or(CALIBRATED_NOISE_SCALE)
    }

    pub fn robot(&self) -> NoiseModel {
        if !self.enabled {
            return NoiseModel::disabled();
        }
        NoiseModel {
            pipette_cv: self.pipette.pipette_cv * self.scale(),
            ..self.pipette
        }
    }

    pub fn hplc(&self) -> InjectionModel {
        if !self.enabled {
            return InjectionModel::noiseless();
        }
        let k = self.scale();
        InjectionModel {
            injection_cv: self.injection.injection_cv * k,
            drift_cv: self.injection.drift_cv * k,
            baseline_noise: self.injection.baseline_noise,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LadderConfig {
    /// Concentration of each analyte in the starting mixture.
    pub stock_mg_per_ml: f64,
    pub dilutions: usize,
    pub well_volume_ul: f64,
    /// Points above this concentration are left out of the fit.
    pub cutoff_mg_per_ml: Option<f64>,
}

impl Default for LadderConfig {
    fn default() -> Self {
        Self {
            stock_mg_per_ml: 12.0,
            dilutions: 11,
            well_volume_ul: 200.0,
            cutoff_mg_per_ml: Some(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationConfig {
    pub n_trials: usize,
    pub n_bits: usize,
    pub pool_volume_ul: f64,
    /// Random vectors drawn per trial when picking by margin.
    pub candidates: usize,
    /// Strong vectors satisfy |z| >= this fraction of the extreme z.
    pub strong_fraction: f64,
    /// Boundary vectors satisfy 0 < |z| <= this fraction of max |z|.
    pub boundary_fraction: f64,
    /// JSON file of trial specs replacing the generated ones.
    pub trials_file: Option<PathBuf>,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            n_trials: 16,
            n_bits: 16,
            pool_volume_ul: 200.0,
            candidates: 1000,
            strong_fraction: 0.5,
            boundary_fraction: 0.1,
            trials_file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MnistConfig {
    /// Directory holding `images.json` and `classifiers.json`; the bundled
    /// fixtures are used when unset.
    pub fixtures_dir: Option<PathBuf>,
    /// Real MNIST IDX files. When both are given, classifiers are trained.
    pub idx_images: Option<PathBuf>,
    pub idx_labels: Option<PathBuf>,
    pub train_per_class: usize,
    pub classes: Vec<u8>,
}

impl Default for MnistConfig {
    fn default() -> Self {
        Self {
            fixtures_dir: None,
            idx_images: None,
            idx_labels: None,
            train_per_class: 100,
            classes: vec![0, 1, 2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seeds: Vec<u64>,
    pub out_dir: Option<PathBuf>,
    pub noise: NoiseSettings,
    pub compile: CompileConfig,
    pub stock_mg_per_ml: f64,
    pub write_volume_ul: f64,
    pub ladder: LadderConfig,
    pub validation: ValidationConfig,
    pub mnist: MnistConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::default(),
            seeds: vec![0],
            out_dir: None,
            noise: NoiseSettings::default(),
            compile: CompileConfig::default(),
            stock_mg_per_ml: DEFAULT_STOCK_MG_PER_ML,
            write_volume_ul: DEFAULT_WRITE_VOLUME_UL,
            ladder: LadderConfig::default(),
            validation: ValidationConfig::default(),
            mnist: MnistConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Seeds `seed, seed+1, ..` for a sweep.
    pub fn with_seed_range(mut self, first: u64, n: usize) -> Self {
        self.seeds = (first..first + n as u64).collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("at least one seed is required".into()));
        }
        self.compile.validate()?;
        self.noise.robot().validate()?;
        self.noise.hplc().validate()?;
        if self.noise.scale() < 0.0 {
            return Err(Error::InvalidConfig(
                "noise scale must be non-negative".into(),
            ));
        }
        if !(self.stock_mg_per_ml > 0.0 && self.write_volume_ul > 0.0) {
            return Err(Error::InvalidConfig(
                "stock and write volume must be positive".into(),
            ));
        }
        let l = &self.ladder;
        if !(l.stock_mg_per_ml > 0.0 && l.well_volume_ul > 0.0) || l.dilutions < 2 {
            return Err(Error::InvalidConfig(
                "dilution ladder needs a positive stock and at least 2 steps".into(),
            ));
        }
        let v = &self.validation;
        if v.n_trials == 0 || v.n_bits == 0 || v.candidates == 0 || !(v.pool_volume_ul > 0.0) {
            return Err(Error::InvalidConfig(
                "validation sizes must be positive".into(),
            ));
        }
        if !(0.0 < v.boundary_fraction
            && v.boundary_fraction < v.strong_fraction
            && v.strong_fraction <= 1.0)
        {
            return Err(Error::InvalidConfig(
                "need 0 < boundary_fraction < strong_fraction <= 1".into(),
            ));
        }
        if self.mnist.classes.is_empty() {
            return Err(Error::InvalidConfig(
                "mnist needs at least one class".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_defaults() {
        let cfg = ExperimentConfig::from_toml_str(
            "experiment = \"mnist\"\nseeds = [1, 2]\n[noise]\nenabled = false\n[compile]\npool_volume = 200.0\n",
        )
        .unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::Mnist);
        assert_eq!(cfg.seeds, vec![1, 2]);
        assert!(!cfg.noise.robot().enabled);
        assert_eq!(cfg.validation.n_trials, 16);
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(ExperimentConfig::from_toml_str("seeds = []").is_err());
        assert!(ExperimentConfig::from_toml_str("experiment = \"nope\"").is_err());
        assert!(ExperimentConfig::from_toml_str("[validation]\nboundary_fraction = 0.9").is_err());
    }

    #[test]
    fn noise_scaling() {
        let n = NoiseSettings::scaled(2.0);
        assert_eq!(n.robot().pipette_cv, 0.04);
        assert_eq!(n.hplc().drift_cv, 0.02);
        assert_eq!(NoiseSettings::off().hplc(), InjectionModel::noiseless());
    }
}
