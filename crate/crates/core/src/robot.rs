//! Executes pipetting programs on a deck with a seeded volume-error model.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::compiler::{InstructionSequence, Op};
use crate::error::{Error, Result};
use crate::mixture::{Deck, Location, WellAddress, VOLUME_EPS_UL};

/// Multiplicative Gaussian error on delivered volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// Relative standard deviation of each delivered volume.
    pub pipette_cv: f64,
    /// Relative systematic offset of each delivered volume.
    pub pipette_bias: f64,
    pub enabled: bool,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            pipette_cv: 0.02,
            pipette_bias: 0.0,
            enabled: true,
        }
    }
}

impl NoiseModel {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pipette_cv < 0.0 {
            return Err(Error::InvalidConfig(
                "pipette cv must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Volume actually delivered for an intended volume. Always draws one
    /// normal variate when enabled so streams stay aligned across configs.
    pub fn deliver<R: Rng + ?Sized>(&self, intended_ul: f64, rng: &mut R) -> f64 {
        if !self.enabled {
            return intended_ul;
        }
        let g: f64 = rng.sample(StandardNormal);
        (intended_ul * (1.0 + self.pipette_bias + self.pipette_cv * g)).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub index: usize,
    pub op: Op,
    pub src: String,
    pub dst: String,
    pub intended_ul: f64,
    pub delivered_ul: f64,
    pub tip_id: usize,
    /// The noisy draw exceeded what the source held and was cut short.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExecutionLog {
    pub entries: Vec<LogEntry>,
    pub n_tips: usize,
    pub n_truncated: usize,
}

impl ExecutionLog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,op,intended_ul,delivered_ul,tip_id\n");
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{},{},{:.6},{:.6},{}",
                e.index,
                e.op.as_str(),
                e.intended_ul,
                e.delivered_ul,
                e.tip_id
            );
        }
        out
    }
}

fn well_of(loc: Location) -> WellAddress {
    match loc {
        Location::Data(a) | Location::Output(a) => a,
        _ => WellAddress::new(0, 0),
    }
}

/// Runs `seq` on a copy of `deck`.
///
/// Intended volumes must fit the source (a budget bug otherwise); noise that
/// pushes a draw past what the source holds is truncated and logged.
pub fn execute(
    seq: &InstructionSequence,
    deck: &Deck,
    noise: &NoiseModel,
    seed: u64,
) -> Result<(Deck, ExecutionLog)> {
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut deck = deck.clone();
    let mut log = ExecutionLog::default();
    let mut tip_id = 0;

    for (index, ins) in seq.iter().enumerate() {
        if ins.new_tip {
            tip_id += 1;
            log.n_tips += 1;
        }
        let available = deck.available_ul(ins.src);
        if ins.volume_ul > available + VOLUME_EPS_UL {
            return Err(Error::InsufficientVolume {
                well: well_of(ins.src),
                available_ul: available,
                requested_ul: ins.volume_ul,
            });
        }
        let mut delivered = noise.deliver(ins.volume_ul, &mut rng);
        let truncated = delivered > available;
        if truncated {
            log::warn!(
                "instruction {index}: noisy draw of {delivered:.4} uL from {} truncated to {available:.4} uL",
                ins.src
            );
            delivered = available;
            log.n_truncated += 1;
        }
        let moved = deck.transfer(ins.src, ins.dst, delivered)?;
        log.entries.push(LogEntry {
            index,
            op: ins.op,
            src: ins.src.to_string(),
            dst: ins.dst.to_string(),
            intended_ul: ins.volume_ul,
            delivered_ul: moved,
            tip_id,
            truncated,
        });
    }
    Ok((deck, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::Instruction;
    use crate::mixture::{AnalyteId, AnalyteRegistry, SolutionState};

    fn program() -> (Deck, InstructionSequence) {
        let mut deck = Deck::standard(AnalyteRegistry::phenols());
        let mut seq = InstructionSequence::new("t");
        for c in 0..4 {
            let w = WellAddress::new(0, c);
            deck.data
                .set_well(
                    w,
                    SolutionState::from_concentrations(60.0, &[(AnalyteId(1), 5.0 * c as f64)]),
                )
                .unwrap();
            seq.push(
                Instruction::transfer(
                    Location::Data(w),
                    Location::Output(WellAddress::new(0, 0)),
                    6.25,
                )
                .unwrap(),
            );
        }
        seq.push(
            Instruction::transfer(
                Location::Solvent,
                Location::Output(WellAddress::new(0, 0)),
                5.0,
            )
            .unwrap(),
        );
        seq.assign_tips(crate::compiler::TipPolicy::PerSource);
        (deck, seq)
    }

    #[test]
    fn noiseless_equals_direct_replay() {
        let (deck, seq) = program();
        let (out, log) = execute(&seq, &deck, &NoiseModel::disabled(), 3).unwrap();
        let mut replay = deck.clone();
        for ins in seq.iter() {
            replay.transfer(ins.src, ins.dst, ins.volume_ul).unwrap();
        }
        assert_eq!(out, replay);
        assert_eq!(log.len(), seq.len());
        assert!(log.entries.iter().all(|e| e.intended_ul == e.delivered_ul));
        assert_eq!(log.n_tips, 5);
    }

    #[test]
    fn same_seed_same_log() {
        let (deck, seq) = program();
        let noise = NoiseModel::default();
        let a = execute(&seq, &deck, &noise, 11).unwrap();
        let b = execute(&seq, &deck, &noise, 11).unwrap();
        assert_eq!(a.1.to_csv(), b.1.to_csv());
        assert_eq!(a.0, b.0);
        let c = execute(&seq, &deck, &noise, 12).unwrap();
        assert_ne!(a.1.to_csv(), c.1.to_csv());
    }

    #[test]
    fn delivered_volume_spread() {
        // 10,000 draws at cv 0.02 on 20 uL: sd should be 0.4 uL
        let noise = NoiseModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let v: Vec<f64> = (0..10_000).map(|_| noise.deliver(20.0, &mut rng)).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
        assert!((sd - 0.4).abs() / 0.4 < 0.05, "sd {sd}");
        assert!((mean - 20.0).abs() < 0.02);
    }

    #[test]
    fn noise_conserves_mass() {
        let (deck, seq) = program();
        let before = deck.total_mass_mg(AnalyteId(1));
        let noise = NoiseModel {
            pipette_cv: 0.3,
            ..NoiseModel::default()
        };
        for seed in 0..20 {
            let (out, _) = execute(&seq, &deck, &noise, seed).unwrap();
            let after = out.total_mass_mg(AnalyteId(1));
            assert!((after - before).abs() <= 1e-12 * before);
        }
    }

    #[test]
    fn overdraw_is_truncated() {
        let mut deck = Deck::standard(AnalyteRegistry::phenols());
        let w = WellAddress::new(0, 0);
        deck.data.set_well(w, SolutionState::solvent(10.0)).unwrap();
        let mut seq = InstructionSequence::new("t");
        seq.push(Instruction::transfer(Location::Data(w), Location::Output(w), 10.0).unwrap());
        let noise = NoiseModel {
            pipette_bias: 0.5,
            pipette_cv: 0.0,
            enabled: true,
        };
        let (out, log) = execute(&seq, &deck, &noise, 0).unwrap();
        assert_eq!(log.n_truncated, 1);
        assert_eq!(log.entries[0].delivered_ul, 10.0);
        assert_eq!(out.output.well(w).volume_ul(), 10.0);
        assert!(out.data.well(w).is_empty());
    }

    #[test]
    fn intended_overdraw_is_an_error() {
        let mut deck = Deck::standard(AnalyteRegistry::phenols());
        let w = WellAddress::new(0, 0);
        deck.data.set_well(w, SolutionState::solvent(5.0)).unwrap();
        let mut seq = InstructionSequence::new("t");
        seq.push(Instruction::transfer(Location::Data(w), Location::Output(w), 6.0).unwrap());
        let err = execute(&seq, &deck, &NoiseModel::disabled(), 0).unwrap_err();
        assert_eq!(err.kind(), "InsufficientVolume");
    }

    #[test]
    fn log_csv_header() {
        let (deck, seq) = program();
        let (_, log) = execute(&seq, &deck, &NoiseModel::disabled(), 0).unwrap();
        let csv = log.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "index,op,intended_ul,delivered_ul,tip_id"
        );
        assert_eq!(
            lines.next().unwrap(),
            "0,transfer_from_well,6.250000,6.250000,1"
        );
    }
}
