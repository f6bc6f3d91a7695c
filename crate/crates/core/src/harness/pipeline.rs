//! Steps shared by the experiments: calibration ladders, deck set-up and
//! pool readout.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::{LadderConfig, NoiseSettings};
use crate::compiler::{Instruction, InstructionSequence, PoolWells, TipPolicy};
use crate::error::Result;
use crate::hplc::{self, CalibrationCurve, Chromatogram, HplcProfile, InjectionModel};
use crate::mixture::{
    Analyte, AnalyteId, AnalyteRegistry, Deck, Location, PlateDims, SolutionState,
};
use crate::readout::{differential, DifferentialResult, PoolPair};
use crate::rng::sub_seed;
use crate::robot::execute;

/// Stream tags for [`sub_seed`].
pub mod tags {
    pub const LADDER: u64 = 1;
    pub const TRIALS: u64 = 2;
    pub const ROBOT: u64 = 3;
    pub const HPLC: u64 = 4;
}

/// The three phenols with every stock at `stock_mg_per_ml`.
pub fn registry_with_stock(stock_mg_per_ml: f64) -> Result<AnalyteRegistry> {
    AnalyteRegistry::new(
        AnalyteRegistry::phenols()
            .iter()
            .map(|a| Analyte {
                stock_mg_per_ml,
                ..a.clone()
            })
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderPoint {
    pub analyte: AnalyteId,
    pub nominal_mg_per_ml: f64,
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub curve: CalibrationCurve,
    pub points: Vec<LadderPoint>,
}

/// Nominal concentrations of the ladder, stock first.
pub fn ladder_concentrations(cfg: &LadderConfig) -> Vec<f64> {
    (0..=cfg.dilutions)
        .map(|k| cfg.stock_mg_per_ml / 2f64.powi(k as i32))
        .collect()
}

/// Serial 2:1 dilution of an equal-concentration mixture of `analytes` on
/// the output plate, one well per step.
pub fn ladder_program(
    analytes: &[AnalyteId],
    cfg: &LadderConfig,
) -> Result<(Deck, InstructionSequence)> {
    let mut deck = Deck::standard(AnalyteRegistry::phenols());
    let dims = PlateDims::WELLS_96;
    let conc: Vec<(AnalyteId, f64)> = analytes.iter().map(|&a| (a, cfg.stock_mg_per_ml)).collect();
    let first = dims.address_of(0).expect("plate has wells");
    deck.output.set_well(
        first,
        SolutionState::from_concentrations(cfg.well_volume_ul, &conc),
    )?;
    let mut seq = InstructionSequence::new("ladder");
    let half = cfg.well_volume_ul / 2.0;
    for k in 1..=cfg.dilutions {
        let src = Location::Output(dims.address_of(k - 1).expect("ladder fits the plate"));
        let dst = Location::Output(dims.address_of(k).expect("ladder fits the plate"));
        seq.push(Instruction::transfer(Location::Solvent, dst, half)?);
        seq.push(Instruction::transfer(src, dst, half)?);
    }
    seq.assign_tips(TipPolicy::Always);
    Ok((deck, seq))
}

/// Builds the ladder with the robot, measures every step and fits one
/// slope per analyte.
pub fn run_ladder(
    analytes: &[AnalyteId],
    profile: &HplcProfile,
    cfg: &LadderConfig,
    noise: &NoiseSettings,
    seed: u64,
) -> Result<Calibration> {
    let (deck, seq) = ladder_program(analytes, cfg)?;
    let (deck, _) = execute(&seq, &deck, &noise.robot(), sub_seed(seed, &[tags::LADDER]))?;
    let inj = noise.hplc();
    let mut points = Vec::new();
    let mut series: BTreeMap<AnalyteId, Vec<(f64, f64)>> = BTreeMap::new();
    for (k, nominal) in ladder_concentrations(cfg).into_iter().enumerate() {
        let well = PlateDims::WELLS_96
            .address_of(k)
            .expect("ladder fits the plate");
        let chrom = hplc::measure(
            deck.output.well(well),
            profile,
            &inj,
            sub_seed(seed, &[tags::LADDER, k as u64]),
        )?;
        for &a in analytes {
            let peak = profile
                .peak(a)
                .ok_or(crate::error::Error::UnknownAnalyte(a))?;
            let area = hplc::integrate_peak(&chrom, peak, profile.baseline_window_s)?;
            points.push(LadderPoint {
                analyte: a,
                nominal_mg_per_ml: nominal,
                area,
            });
            series.entry(a).or_default().push((nominal, area));
        }
    }
    Ok(Calibration {
        curve: CalibrationCurve::fit(&series, cfg.cutoff_mg_per_ml)?,
        points,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolReadout {
    pub pair: PoolPair,
    pub result: DifferentialResult,
    /// Positive pool first.
    pub chromatograms: [Chromatogram; 2],
}

/// Injects both pools of one classifier and forms the differential.
pub fn read_pools(
    deck: &Deck,
    pools: PoolWells,
    pool_volume_ul: f64,
    profile: &HplcProfile,
    cal: &CalibrationCurve,
    inj: &InjectionModel,
    seed: u64,
) -> Result<PoolReadout> {
    let mut quantified = Vec::with_capacity(2);
    let mut chroms = Vec::with_capacity(2);
    for (k, well) in [pools.positive, pools.negative].into_iter().enumerate() {
        let sol = deck.output.well(well);
        let chrom = hplc::measure(sol, profile, inj, sub_seed(seed, &[k as u64]))?;
        quantified.push(hplc::quantify(&chrom, cal, profile)?);
        chroms.push(chrom);
    }
    let negative_chrom = chroms.pop().expect("two pools");
    let positive_chrom = chroms.pop().expect("two pools");
    let negative = quantified.pop().expect("two pools");
    let positive = quantified.pop().expect("two pools");
    let pair = PoolPair {
        positive,
        negative,
        pool_volume_ul,
    };
    let result = differential(&pair)?;
    Ok(PoolReadout {
        pair,
        result,
        chromatograms: [positive_chrom, negative_chrom],
    })
}

/// Pool concentrations straight from the deck, no instrument in between.
pub fn exact_pools(
    deck: &Deck,
    pools: PoolWells,
    pool_volume_ul: f64,
    analytes: &[AnalyteId],
) -> Result<PoolPair> {
    let read = |w| -> Result<BTreeMap<AnalyteId, f64>> {
        let sol = deck.output.well(w);
        analytes
            .iter()
            .map(|&a| Ok((a, sol.concentration(a)?)))
            .collect()
    };
    Ok(PoolPair {
        positive: read(pools.positive)?,
        negative: read(pools.negative)?,
        pool_volume_ul,
    })
}
