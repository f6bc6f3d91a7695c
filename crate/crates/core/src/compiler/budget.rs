use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::program::InstructionSequence;
use crate::error::{Error, Result};
use crate::mixture::{Deck, Location, WellAddress, VOLUME_EPS_UL};

pub const DEFAULT_SECONDS_PER_TRANSFER: f64 = 45.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub n_transfers: usize,
    pub n_tips: usize,
    pub est_time_min: f64,
    pub transfers_by_op: BTreeMap<String, usize>,
    pub total_volume_ul: f64,
    /// Cumulative volume drawn from each well, keyed by location label.
    pub per_well_draw_ul: BTreeMap<String, f64>,
}

impl CostReport {
    pub fn empty() -> Self {
        Self {
            n_transfers: 0,
            n_tips: 0,
            est_time_min: 0.0,
            transfers_by_op: BTreeMap::new(),
            total_volume_ul: 0.0,
            per_well_draw_ul: BTreeMap::new(),
        }
    }

    /// Re-estimates run time for a different per-transfer duration.
    pub fn retime(mut self, seconds_per_transfer: f64) -> Self {
        self.est_time_min = self.n_transfers as f64 * seconds_per_transfer / 60.0;
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cost report serializes")
    }

    /// Adds another report's counts into this one, keeping this report's
    /// time model.
    pub fn merge(&mut self, other: &CostReport) {
        let secs = if self.n_transfers > 0 {
            self.est_time_min * 60.0 / self.n_transfers as f64
        } else {
            DEFAULT_SECONDS_PER_TRANSFER
        };
        self.n_transfers += other.n_transfers;
        self.n_tips += other.n_tips;
        self.total_volume_ul += other.total_volume_ul;
        for (k, v) in &other.transfers_by_op {
            *self.transfers_by_op.entry(k.clone()).or_insert(0) += v;
        }
        for (k, v) in &other.per_well_draw_ul {
            *self.per_well_draw_ul.entry(k.clone()).or_insert(0.0) += v;
        }
        self.est_time_min = self.n_transfers as f64 * secs / 60.0;
    }
}

/// Replays intended volumes (no noise) against the deck and reports costs.
/// Fails on the first draw that would take a well below zero.
pub fn check_budget(seq: &InstructionSequence, deck: &Deck) -> Result<CostReport> {
    let mut volume: BTreeMap<Location, f64> = BTreeMap::new();
    let mut drawn: BTreeMap<Location, f64> = BTreeMap::new();
    let mut report = CostReport::empty();

    for ins in seq.iter() {
        if !ins.src.is_reservoir() {
            let have = *volume
                .entry(ins.src)
                .or_insert_with(|| deck.available_ul(ins.src));
            let total = drawn.entry(ins.src).or_insert(0.0);
            *total += ins.volume_ul;
            if ins.volume_ul > have + VOLUME_EPS_UL {
                let well = match ins.src {
                    Location::Data(a) | Location::Output(a) => a,
                    _ => unreachable!(),
                };
                return Err(Error::BudgetExceeded {
                    well,
                    required_ul: *total,
                    available_ul: *total - ins.volume_ul + have,
                });
            }
            volume.insert(ins.src, (have - ins.volume_ul).max(0.0));
        }
        let dst = volume
            .entry(ins.dst)
            .or_insert_with(|| deck.available_ul(ins.dst));
        *dst += ins.volume_ul;

        report.n_transfers += 1;
        report.n_tips += ins.new_tip as usize;
        report.total_volume_ul += ins.volume_ul;
        *report
            .transfers_by_op
            .entry(ins.op.as_str().to_string())
            .or_insert(0) += 1;
    }
    report.per_well_draw_ul = drawn.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    Ok(report.retime(DEFAULT_SECONDS_PER_TRANSFER))
}

/// Applies `passes` in order to the data plate's volumes and returns, per
/// initially occupied data well, how many passes it served before the next
/// one would have overdrawn it.
pub fn passes_supported(
    deck: &Deck,
    passes: &[InstructionSequence],
) -> BTreeMap<WellAddress, usize> {
    let mut volume: BTreeMap<WellAddress, f64> = deck
        .data
        .occupied()
        .map(|(a, s)| (a, s.volume_ul()))
        .collect();
    let mut served: BTreeMap<WellAddress, usize> = volume.keys().map(|a| (*a, 0)).collect();
    let mut exhausted: std::collections::BTreeSet<WellAddress> = Default::default();

    for pass in passes {
        let mut demand: BTreeMap<WellAddress, f64> = BTreeMap::new();
        for ins in pass.iter() {
            if let Location::Data(a) = ins.src {
                *demand.entry(a).or_insert(0.0) += ins.volume_ul;
            }
        }
        for (well, left) in volume.iter_mut() {
            if exhausted.contains(well) {
                continue;
            }
            let need = demand.get(well).copied().unwrap_or(0.0);
            if need > *left + VOLUME_EPS_UL {
                exhausted.insert(*well);
            } else {
                *left -= need;
                *served.get_mut(well).unwrap() += 1;
            }
        }
    }
    served
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::TrainedClassifier;
    use crate::compiler::{compile, CompileConfig, PoolWells};
    use crate::encoder::layout;
    use crate::mixture::{AnalyteRegistry, PlateDims, SolutionState};

    fn deck_with(n: usize, volume: f64) -> Deck {
        let mut deck = Deck::standard(AnalyteRegistry::phenols());
        for &a in layout(n, PlateDims::WELLS_384).unwrap().wells() {
            deck.data
                .set_well(a, SolutionState::solvent(volume))
                .unwrap();
        }
        deck
    }

    #[test]
    fn empty_sequence_costs_nothing() {
        let deck = deck_with(1, 60.0);
        let r = check_budget(&InstructionSequence::default(), &deck).unwrap();
        assert_eq!(r, CostReport::empty());
    }

    #[test]
    fn full_weight_passes() {
        // 60 / 6.25 = 9.6 passes
        let deck = deck_with(4, 60.0);
        let plan = layout(4, PlateDims::WELLS_384).unwrap();
        let c = TrainedClassifier::new(vec![1.0, -1.0, 1.0, -1.0], 0.0, "f");
        let pass = compile(
            &c,
            &plan,
            PoolWells::nth(0, PlateDims::WELLS_96).unwrap(),
            &CompileConfig::default(),
        )
        .unwrap();
        let nine = (0..8).fold(pass.clone(), |acc, _| acc.then(&pass));
        let r = check_budget(&nine, &deck).unwrap();
        assert_eq!(r.per_well_draw_ul["A1"], 9.0 * 6.25);
        let ten = nine.then(&pass);
        match check_budget(&ten, &deck).unwrap_err() {
            Error::BudgetExceeded {
                well,
                required_ul,
                available_ul,
            } => {
                assert_eq!(well, WellAddress::new(0, 0));
                assert_eq!(required_ul, 62.5);
                assert_eq!(available_ul, 60.0);
            }
            e => panic!("unexpected {e}"),
        }
        let served = passes_supported(&deck, &vec![pass; 12]);
        assert!(served.values().all(|&n| n == 9));
    }

    #[test]
    fn report_counts() {
        let deck = deck_with(2, 60.0);
        let plan = layout(2, PlateDims::WELLS_384).unwrap();
        let c = TrainedClassifier::new(vec![0.5, -0.5], 0.0, "t");
        let seq = compile(
            &c,
            &plan,
            PoolWells::nth(0, PlateDims::WELLS_96).unwrap(),
            &CompileConfig::default(),
        )
        .unwrap();
        let r = check_budget(&seq, &deck).unwrap();
        assert_eq!(r.n_transfers, seq.len());
        assert_eq!(r.n_tips, 3);
        assert_eq!(r.transfers_by_op["transfer_from_well"], 2);
        assert_eq!(r.transfers_by_op["transfer_solvent"], 2);
        assert!((r.est_time_min - 4.0 * 45.0 / 60.0).abs() < 1e-12);
        let mut twice = r.clone();
        twice.merge(&r);
        assert_eq!(twice.n_transfers, 8);
        assert_eq!(twice.transfers_by_op["transfer_solvent"], 4);
        assert!((twice.est_time_min - 6.0).abs() < 1e-12);
    }
}
