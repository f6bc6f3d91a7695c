//! Differential readout of positive/negative pool pairs.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::classifier::{threshold, ClassLabel};
use crate::error::{Error, Result};
use crate::mixture::AnalyteId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolPair {
    pub positive: BTreeMap<AnalyteId, f64>,
    pub negative: BTreeMap<AnalyteId, f64>,
    pub pool_volume_ul: f64,
}

impl PoolPair {
    pub fn swapped(&self) -> Self {
        Self {
            positive: self.negative.clone(),
            negative: self.positive.clone(),
            pool_volume_ul: self.pool_volume_ul,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyteOutput {
    /// Differential concentration, mg/mL.
    pub z: f64,
    pub label: ClassLabel,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DifferentialResult {
    pub outputs: BTreeMap<AnalyteId, AnalyteOutput>,
}

impl DifferentialResult {
    pub fn z(&self, id: AnalyteId) -> Option<f64> {
        self.outputs.get(&id).map(|o| o.z)
    }

    pub fn label(&self, id: AnalyteId) -> Option<ClassLabel> {
        self.outputs.get(&id).map(|o| o.label)
    }
}

pub fn differential(p: &PoolPair) -> Result<DifferentialResult> {
    if !(p.pool_volume_ul > 0.0) {
        return Err(Error::InvalidConfig("pool volume must be positive".into()));
    }
    for id in p.positive.keys().chain(p.negative.keys()) {
        if !p.positive.contains_key(id) || !p.negative.contains_key(id) {
            return Err(Error::KeyMismatch(*id));
        }
    }
    let outputs = p
        .positive
        .iter()
        .map(|(&id, &cp)| {
            let z = cp - p.negative[&id];
            (
                id,
                AnalyteOutput {
                    z,
                    label: threshold(z),
                },
            )
        })
        .collect();
    Ok(DifferentialResult { outputs })
}

/// Electronic reference for a differential output: the pooled
/// concentration the chemistry should produce with exact volumes.
pub fn oracle_z(v_o_ul: f64, pool_volume_ul: f64, written_mg_per_ml: f64, dot: f64) -> f64 {
    v_o_ul / pool_volume_ul * written_mg_per_ml * dot
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub trial: String,
    pub analyte: AnalyteId,
    pub expected_z: f64,
    pub measured_z: f64,
    pub expected_label: ClassLabel,
    pub measured_label: ClassLabel,
}

impl ResultRow {
    pub fn new(
        trial: impl Into<String>,
        analyte: AnalyteId,
        expected_z: f64,
        measured_z: f64,
    ) -> Self {
        Self {
            trial: trial.into(),
            analyte,
            expected_z,
            measured_z,
            expected_label: threshold(expected_z),
            measured_label: threshold(measured_z),
        }
    }

    pub fn correct(&self) -> bool {
        self.expected_label == self.measured_label
    }
}

pub const RESULTS_HEADER: &str =
    "trial,analyte,expected_z,measured_z,expected_label,measured_label,correct";

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut out = format!("{RESULTS_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{},{},{}",
            r.trial,
            r.analyte,
            r.expected_z,
            r.measured_z,
            r.expected_label,
            r.measured_label,
            r.correct()
        );
    }
    out
}
