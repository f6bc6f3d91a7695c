//! Pipetting instructions and their JSON-lines wire format.
//!
//! One instruction per line, fixed field order, volumes with three
//! decimals:
//!
//! ```text
//! {"op":"transfer_from_well","src":"A1","dst":"out:A1","vol_ul":3.100,"new_tip":true}
//! ```

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{Location, WellAddress};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    TransferFromWell,
    TransferStock,
    TransferSolvent,
}

impl Op {
    pub fn as_str(&self) -> &'static str {
        match self {
            Op::TransferFromWell => "transfer_from_well",
            Op::TransferStock => "transfer_stock",
            Op::TransferSolvent => "transfer_solvent",
        }
    }
}

impl std::str::FromStr for Op {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transfer_from_well" => Ok(Op::TransferFromWell),
            "transfer_stock" => Ok(Op::TransferStock),
            "transfer_solvent" => Ok(Op::TransferSolvent),
            other => Err(Error::Parse(format!("unknown op {other:?}"))),
        }
    }
}

/// When the robot picks up a fresh tip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TipPolicy {
    /// New tip whenever the source differs from the previous transfer.
    #[default]
    PerSource,
    /// New tip whenever the destination differs from the previous transfer.
    PerDestination,
    /// New tip for every transfer.
    Always,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instruction {
    pub op: Op,
    pub src: Location,
    pub dst: Location,
    pub volume_ul: f64,
    pub new_tip: bool,
}

impl Instruction {
    /// Builds a transfer, inferring the op from the source.
    pub fn transfer(src: Location, dst: Location, volume_ul: f64) -> Result<Self> {
        let op = match src {
            Location::Data(_) | Location::Output(_) => Op::TransferFromWell,
            Location::Stock(_) => Op::TransferStock,
            Location::Solvent => Op::TransferSolvent,
        };
        if dst.is_reservoir() {
            return Err(Error::BadLocation(dst));
        }
        if !(volume_ul >= 0.0) || !volume_ul.is_finite() {
            return Err(Error::InvalidConfig(format!("bad volume {volume_ul}")));
        }
        Ok(Self {
            op,
            src,
            dst,
            volume_ul,
            new_tip: false,
        })
    }

    fn validate(&self) -> Result<()> {
        let ok = matches!(
            (self.op, self.src),
            (
                Op::TransferFromWell,
                Location::Data(_) | Location::Output(_)
            ) | (Op::TransferStock, Location::Stock(_))
                | (Op::TransferSolvent, Location::Solvent)
        );
        if !ok {
            return Err(Error::BadLocation(self.src));
        }
        if self.dst.is_reservoir() {
            return Err(Error::BadLocation(self.dst));
        }
        Ok(())
    }

    pub fn to_json_line(&self) -> String {
        format!(
            "{{\"op\":\"{}\",\"src\":\"{}\",\"dst\":\"{}\",\"vol_ul\":{:.3},\"new_tip\":{}}}",
            self.op.as_str(),
            self.src,
            self.dst,
            self.volume_ul,
            self.new_tip
        )
    }
}

#[derive(Deserialize)]
struct RawInstruction {
    op: String,
    src: String,
    dst: String,
    vol_ul: f64,
    new_tip: bool,
}

/// Pool wells on the output plate for one classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolWells {
    pub positive: WellAddress,
    pub negative: WellAddress,
}

impl PoolWells {
    /// The `k`-th pair of output wells in row-major order.
    pub fn nth(k: usize, dims: crate::mixture::PlateDims) -> Option<Self> {
        Some(Self {
            positive: dims.address_of(2 * k)?,
            negative: dims.address_of(2 * k + 1)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SequenceMeta {
    pub label: String,
    pub pool_volume_ul: Option<f64>,
    pub pools: Option<PoolWells>,
    /// Feature indices whose draw fell below the minimum transfer.
    pub dropped: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InstructionSequence {
    pub instructions: Vec<Instruction>,
    pub meta: SequenceMeta,
}

impl InstructionSequence {
    pub fn new(label: impl Into<String>) -> Self {
        Self {
            instructions: Vec::new(),
            meta: SequenceMeta {
                label: label.into(),
                ..SequenceMeta::default()
            },
        }
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Instruction> {
        self.instructions.iter()
    }

    /// Appends a transfer; zero volumes are dropped.
    pub fn push(&mut self, ins: Instruction) {
        if ins.volume_ul > 0.0 {
            self.instructions.push(ins);
        }
    }

    /// Concatenates programs, keeping the first one's metadata.
    pub fn then(mut self, other: &InstructionSequence) -> Self {
        self.instructions.extend(other.instructions.iter().cloned());
        self
    }

    /// Recomputes `new_tip` flags for the whole sequence.
    pub fn assign_tips(&mut self, policy: TipPolicy) {
        let mut prev: Option<(Location, Location)> = None;
        for ins in &mut self.instructions {
            ins.new_tip = match (policy, prev) {
                (_, None) | (TipPolicy::Always, _) => true,
                (TipPolicy::PerSource, Some((src, _))) => src != ins.src,
                (TipPolicy::PerDestination, Some((_, dst))) => dst != ins.dst,
            };
            prev = Some((ins.src, ins.dst));
        }
    }

    pub fn n_tips(&self) -> usize {
        self.instructions.iter().filter(|i| i.new_tip).count()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for ins in &self.instructions {
            let _ = writeln!(out, "{}", ins.to_json_line());
        }
        out
    }

    pub fn from_jsonl(s: &str) -> Result<Self> {
        let mut seq = InstructionSequence::default();
        for (n, line) in s.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let raw: RawInstruction = serde_json::from_str(line)
                .map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))?;
            let ins = Instruction {
                op: raw.op.parse()?,
                src: raw.src.parse()?,
                dst: raw.dst.parse()?,
                volume_ul: raw.vol_ul,
                new_tip: raw.new_tip,
            };
            ins.validate()?;
            if !(ins.volume_ul >= 0.0) {
                return Err(Error::Parse(format!("line {}: negative volume", n + 1)));
            }
            seq.instructions.push(ins);
        }
        Ok(seq)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::AnalyteId;

    fn well(r: usize, c: usize) -> Location {
        Location::Data(WellAddress::new(r, c))
    }

    #[test]
    fn json_line_is_stable() {
        let mut ins = Instruction::transfer(
            well(0, 0),
            Location::Output(WellAddress::new(0, 1)),
            3.1000000000000005,
        )
        .unwrap();
        ins.new_tip = true;
        assert_eq!(
            ins.to_json_line(),
            r#"{"op":"transfer_from_well","src":"A1","dst":"out:A2","vol_ul":3.100,"new_tip":true}"#
        );
    }

    #[test]
    fn jsonl_round_trip() {
        let mut seq = InstructionSequence::new("t");
        seq.push(Instruction::transfer(Location::Stock(AnalyteId(2)), well(1, 2), 20.0).unwrap());
        seq.push(Instruction::transfer(Location::Solvent, well(1, 3), 20.0).unwrap());
        seq.push(
            Instruction::transfer(well(1, 2), Location::Output(WellAddress::new(0, 0)), 6.25)
                .unwrap(),
        );
        seq.assign_tips(TipPolicy::PerSource);
        let text = seq.to_jsonl();
        let back = InstructionSequence::from_jsonl(&text).unwrap();
        assert_eq!(back.instructions, seq.instructions);
        assert_eq!(back.to_jsonl(), text);
    }

    #[test]
    fn rejects_inconsistent_op() {
        let line = r#"{"op":"transfer_stock","src":"A1","dst":"B1","vol_ul":1.000,"new_tip":true}"#;
        assert!(InstructionSequence::from_jsonl(line).is_err());
        let line = r#"{"op":"transfer_solvent","src":"solvent","dst":"stock:1","vol_ul":1.000,"new_tip":true}"#;
        assert!(InstructionSequence::from_jsonl(line).is_err());
    }

    #[test]
    fn zero_volume_is_omitted() {
        let mut seq = InstructionSequence::new("t");
        seq.push(Instruction::transfer(Location::Solvent, well(0, 0), 0.0).unwrap());
        assert!(seq.is_empty());
    }

    #[test]
    fn tip_policies() {
        let mut seq = InstructionSequence::new("t");
        let pool = Location::Output(WellAddress::new(0, 0));
        for src in [well(0, 0), well(0, 0), well(0, 1)] {
            seq.push(Instruction::transfer(src, pool, 1.0).unwrap());
        }
        seq.assign_tips(TipPolicy::PerSource);
        assert_eq!(seq.n_tips(), 2);
        seq.assign_tips(TipPolicy::PerDestination);
        assert_eq!(seq.n_tips(), 1);
        seq.assign_tips(TipPolicy::Always);
        assert_eq!(seq.n_tips(), 3);
    }
}
