//! Lowers a trained classifier into volumetric transfers.
//!
//! Each weight becomes a draw of `|w_i| * V_o` microlitres from data well
//! `i` into the positive or negative pool, chosen by the weight's sign.
//! Both pools are then topped up with solvent to the same volume `V_p`, so
//! the differential concentration of every analyte `m` equals
//! `(V_o / V_p) * sum_i w_i * C_mi`, the perceptron sum over all datasets
//! stored in the plate at once.

mod budget;
mod program;

pub use budget::{check_budget, passes_supported, CostReport};
pub use program::{Instruction, InstructionSequence, Op, PoolWells, SequenceMeta, TipPolicy};

use serde::{Deserialize, Serialize};

use crate::classifier::TrainedClassifier;
use crate::encoder::EncodingPlan;
use crate::error::{Error, Result};
use crate::mixture::{Location, WellAddress};

/// Target volume of both pools after solvent top-up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(try_from = "PoolVolumeRepr", into = "PoolVolumeRepr")]
pub enum PoolVolume {
    /// Smallest positive multiple of 5 uL that holds the larger pool.
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PoolVolumeRepr {
    Number(f64),
    Text(String),
}

impl TryFrom<PoolVolumeRepr> for PoolVolume {
    type Error = String;

    fn try_from(r: PoolVolumeRepr) -> std::result::Result<Self, String> {
        match r {
            PoolVolumeRepr::Number(v) => Ok(PoolVolume::Fixed(v)),
            PoolVolumeRepr::Text(s) if s == "auto" => Ok(PoolVolume::Auto),
            PoolVolumeRepr::Text(s) => Err(format!(
                "pool volume must be a number or \"auto\", got {s:?}"
            )),
        }
    }
}

impl From<PoolVolume> for PoolVolumeRepr {
    fn from(p: PoolVolume) -> Self {
        match p {
            PoolVolume::Auto => PoolVolumeRepr::Text("auto".into()),
            PoolVolume::Fixed(v) => PoolVolumeRepr::Number(v),
        }
    }
}

pub const AUTO_POOL_STEP_UL: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompileConfig {
    /// Draw volume for a weight of magnitude 1.
    pub v_o_ul: f64,
    pub pipette_resolution_ul: f64,
    pub min_transfer_ul: f64,
    pub pool_volume: PoolVolume,
    /// Round draws to the pipette grid and drop sub-minimum transfers.
    pub quantize: bool,
    pub tip_policy: TipPolicy,
    pub seconds_per_transfer: f64,
    /// When set, any single draw larger than this is a budget error.
    pub available_ul: Option<f64>,
}

impl Default for CompileConfig {
    fn default() -> Self {
        Self {
            v_o_ul: 6.25,
            pipette_resolution_ul: 0.05,
            min_transfer_ul: 0.5,
            pool_volume: PoolVolume::Auto,
            quantize: true,
            tip_policy: TipPolicy::PerSource,
            seconds_per_transfer: 45.0,
            available_ul: None,
        }
    }
}

impl CompileConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_o_ul > 0.0) {
            return Err(Error::InvalidConfig("V_o must be positive".into()));
        }
        if !(self.pipette_resolution_ul > 0.0) {
            return Err(Error::InvalidConfig(
                "pipette resolution must be positive".into(),
            ));
        }
        if self.min_transfer_ul < 0.0 {
            return Err(Error::InvalidConfig(
                "minimum transfer must be non-negative".into(),
            ));
        }
        if let PoolVolume::Fixed(v) = self.pool_volume {
            if !(v > 0.0) {
                return Err(Error::InvalidConfig("pool volume must be positive".into()));
            }
        }
        Ok(())
    }

    fn steps_per_ul(&self) -> Option<f64> {
        let inv = 1.0 / self.pipette_resolution_ul;
        ((inv - inv.round()).abs() < 1e-9).then(|| inv.round())
    }

    fn to_steps(&self, volume_ul: f64) -> f64 {
        let x = volume_ul / self.pipette_resolution_ul;
        let floor = x.floor();
        if ((x - floor) - 0.5).abs() < 1e-9 {
            if floor % 2.0 == 0.0 {
                floor
            } else {
                floor + 1.0
            }
        } else {
            x.round()
        }
    }

    fn from_steps(&self, steps: f64) -> f64 {
        match self.steps_per_ul() {
            Some(per) => steps / per,
            None => steps * self.pipette_resolution_ul,
        }
    }
}

/// Rounds a volume to the pipette grid (ties to even step). Results below
/// the minimum transfer become zero.
pub fn quantize(volume_ul: f64, cfg: &CompileConfig) -> f64 {
    if volume_ul <= 0.0 {
        return 0.0;
    }
    let v = cfg.from_steps(cfg.to_steps(volume_ul));
    if v + 1e-9 < cfg.min_transfer_ul {
        0.0
    } else {
        v
    }
}

fn auto_pool_volume(max_sum_ul: f64) -> f64 {
    let k = (max_sum_ul / AUTO_POOL_STEP_UL - 1e-9).ceil().max(1.0);
    k * AUTO_POOL_STEP_UL
}

/// Builds the pooling program for one classifier.
///
/// Draws are emitted in feature order, followed by the bias well when the
/// bias is non-zero, followed by the two solvent top-ups.
pub fn compile(
    classifier: &TrainedClassifier,
    plan: &EncodingPlan,
    pools: PoolWells,
    cfg: &CompileConfig,
) -> Result<InstructionSequence> {
    cfg.validate()?;
    if classifier.len() != plan.n_bits() {
        return Err(Error::LengthMismatch {
            expected: plan.n_bits(),
            got: classifier.len(),
        });
    }
    if pools.positive == pools.negative {
        return Err(Error::InvalidConfig(
            "positive and negative pools must differ".into(),
        ));
    }

    let mut features: Vec<(Option<usize>, WellAddress, f64)> = classifier
        .weights
        .iter()
        .enumerate()
        .map(|(i, &w)| (Some(i), plan.well(i), w))
        .collect();
    if classifier.bias != 0.0 {
        let well = plan.bias_well().ok_or_else(|| {
            Error::InvalidConfig("classifier has a bias but the plan reserves no bias well".into())
        })?;
        features.push((None, well, classifier.bias));
    }

    let mut seq = InstructionSequence::new(classifier.foreground_label.clone());
    let pos = Location::Output(pools.positive);
    let neg = Location::Output(pools.negative);
    // pool sums tracked in grid steps when quantizing so top-ups land exactly
    let mut sum_pos = 0.0;
    let mut sum_neg = 0.0;
    for (index, well, w) in features {
        if w == 0.0 {
            continue;
        }
        let exact = w.abs() * cfg.v_o_ul;
        let (volume, amount) = if cfg.quantize {
            let v = quantize(exact, cfg);
            (v, if v > 0.0 { cfg.to_steps(v) } else { 0.0 })
        } else {
            (exact, exact)
        };
        if volume == 0.0 {
            if let Some(i) = index {
                log::warn!(
                    "weight {i} ({w:.4}) needs {exact:.4} uL, below the {} uL minimum; dropped",
                    cfg.min_transfer_ul
                );
                seq.meta.dropped.push(i);
            }
            continue;
        }
        if let Some(avail) = cfg.available_ul {
            if volume > avail + 1e-9 {
                return Err(Error::BudgetExceeded {
                    well,
                    required_ul: volume,
                    available_ul: avail,
                });
            }
        }
        let dst = if w > 0.0 {
            sum_pos += amount;
            pos
        } else {
            sum_neg += amount;
            neg
        };
        seq.push(Instruction::transfer(Location::Data(well), dst, volume)?);
    }

    let to_ul = |amount: f64| {
        if cfg.quantize {
            cfg.from_steps(amount)
        } else {
            amount
        }
    };
    let max_sum_ul = to_ul(sum_pos).max(to_ul(sum_neg));
    let pool_ul = match cfg.pool_volume {
        PoolVolume::Auto => auto_pool_volume(max_sum_ul),
        PoolVolume::Fixed(v) => {
            if v + 1e-9 < max_sum_ul {
                return Err(Error::InfeasiblePool {
                    pool_ul: v,
                    required_ul: max_sum_ul,
                });
            }
            v
        }
    };
    for (sum, dst) in [(sum_pos, pos), (sum_neg, neg)] {
        let top_up = if cfg.quantize {
            let target = cfg.to_steps(pool_ul);
            if (target - pool_ul / cfg.pipette_resolution_ul).abs() > 1e-6 {
                return Err(Error::InvalidConfig(format!(
                    "pool volume {pool_ul} uL is not on the {} uL pipette grid",
                    cfg.pipette_resolution_ul
                )));
            }
            cfg.from_steps((target - sum).max(0.0))
        } else {
            (pool_ul - sum).max(0.0)
        };
        seq.push(Instruction::transfer(Location::Solvent, dst, top_up)?);
    }

    seq.meta.pool_volume_ul = Some(pool_ul);
    seq.meta.pools = Some(pools);
    seq.assign_tips(cfg.tip_policy);
    Ok(seq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::layout;
    use crate::mixture::PlateDims;

    fn pools() -> PoolWells {
        PoolWells::nth(0, PlateDims::WELLS_96).unwrap()
    }

    #[test]
    fn quantize_examples() {
        let cfg = CompileConfig::default();
        assert_eq!(quantize(3.125, &cfg), 3.1);
        assert_eq!(quantize(3.175, &cfg), 3.2);
        assert_eq!(quantize(0.02, &cfg), 0.0);
        assert_eq!(quantize(6.25, &cfg), 6.25);
        assert_eq!(quantize(0.5, &cfg), 0.5);
        assert_eq!(quantize(0.49, &cfg), 0.5);
        assert_eq!(quantize(0.47, &cfg), 0.0);
    }

    #[test]
    fn two_weight_program() {
        let plan = layout(2, PlateDims::WELLS_384).unwrap();
        let c = TrainedClassifier::new(vec![0.5, -0.5], 0.0, "t");
        let seq = compile(&c, &plan, pools(), &CompileConfig::default()).unwrap();
        let vols: Vec<f64> = seq.iter().map(|i| i.volume_ul).collect();
        // draws 3.1 each, V_p auto = 5, top-ups 1.9 each
        assert_eq!(vols, vec![3.1, 3.1, 1.9, 1.9]);
        assert_eq!(seq.instructions[0].dst, Location::Output(pools().positive));
        assert_eq!(seq.instructions[1].dst, Location::Output(pools().negative));
        assert_eq!(seq.instructions[2].op, Op::TransferSolvent);
        assert_eq!(seq.meta.pool_volume_ul, Some(5.0));
    }

    #[test]
    fn null_program() {
        let plan = layout(4, PlateDims::WELLS_384).unwrap();
        let c = TrainedClassifier::new(vec![0.0; 4], 0.0, "z");
        let seq = compile(&c, &plan, pools(), &CompileConfig::default()).unwrap();
        assert_eq!(seq.len(), 2);
        assert!(seq
            .iter()
            .all(|i| i.op == Op::TransferSolvent && i.volume_ul == 5.0));
    }

    #[test]
    fn dropped_weights_are_recorded() {
        let plan = layout(3, PlateDims::WELLS_384).unwrap();
        let c = TrainedClassifier::new(vec![1.0, 0.01, -0.2], 0.0, "d");
        let seq = compile(&c, &plan, pools(), &CompileConfig::default()).unwrap();
        assert_eq!(seq.meta.dropped, vec![1]);
        assert_eq!(seq.instructions[1].volume_ul, 1.25);
    }

    #[test]
    fn fixed_pool_too_small() {
        let plan = layout(2, PlateDims::WELLS_384).unwrap();
        let c = TrainedClassifier::new(vec![1.0, 1.0], 0.0, "t");
        let cfg = CompileConfig {
            pool_volume: PoolVolume::Fixed(10.0),
            ..CompileConfig::default()
        };
        assert_eq!(
            compile(&c, &plan, pools(), &cfg).unwrap_err(),
            Error::InfeasiblePool {
                pool_ul: 10.0,
                required_ul: 12.5
            }
        );
    }

    #[test]
    fn bias_requires_reserved_well() {
        let plan = layout(2, PlateDims::WELLS_384).unwrap();
        let c = TrainedClassifier::new(vec![1.0, -1.0], -0.5, "b");
        assert!(compile(&c, &plan, pools(), &CompileConfig::default()).is_err());
        let plan = plan.with_bias_well().unwrap();
        let seq = compile(&c, &plan, pools(), &CompileConfig::default()).unwrap();
        let bias = &seq.instructions[2];
        assert_eq!(bias.src, Location::Data(plan.bias_well().unwrap()));
        assert_eq!(bias.dst, Location::Output(pools().negative));
        assert_eq!(bias.volume_ul, 3.1);
    }

    #[test]
    fn budget_guard_in_compile() {
        let plan = layout(1, PlateDims::WELLS_384).unwrap();
        let c = TrainedClassifier::new(vec![1.0], 0.0, "t");
        let cfg = CompileConfig {
            available_ul: Some(5.0),
            ..CompileConfig::default()
        };
        assert_eq!(
            compile(&c, &plan, pools(), &cfg).unwrap_err().kind(),
            "BudgetExceeded"
        );
    }

    #[test]
    fn full_plate_instruction_count() {
        let plan = layout(256, PlateDims::WELLS_384).unwrap();
        let w: Vec<f64> = (0..256)
            .map(|i| ((i * 37 % 101) as f64 / 50.0) - 1.0)
            .collect();
        let c = TrainedClassifier::new(w.clone(), 0.0, "big");
        let seq = compile(&c, &plan, pools(), &CompileConfig::default()).unwrap();
        let draws = seq.iter().filter(|i| i.op == Op::TransferFromWell).count();
        let cfg = CompileConfig::default();
        let expected_draws = w
            .iter()
            .filter(|w| quantize(w.abs() * 6.25, &cfg) > 0.0)
            .count();
        assert_eq!(draws, expected_draws);
        assert!(seq.len() <= 256 + 2);
    }

    #[test]
    fn pool_volume_serde() {
        let a: PoolVolume = serde_json::from_str("\"auto\"").unwrap();
        assert_eq!(a, PoolVolume::Auto);
        let f: PoolVolume = serde_json::from_str("200.0").unwrap();
        assert_eq!(f, PoolVolume::Fixed(200.0));
        assert!(serde_json::from_str::<PoolVolume>("\"big\"").is_err());
    }
}
