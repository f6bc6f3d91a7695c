//! Writes binary datasets onto a plate.
//!
//! Bit `i` of every dataset lives in the same well; dataset `m` is carried
//! by analyte `m`. A `1` is written as a fixed volume of that analyte's
//! stock, a `0` as the same volume of pure solvent, so every well ends at
//! `M * write_volume` whatever the data.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::compiler::{Instruction, InstructionSequence, TipPolicy};
use crate::error::{Error, Result};
use crate::hplc::HplcProfile;
use crate::mixture::{AnalyteId, AnalyteRegistry, Location, PlateDims, PlateState, WellAddress};

pub const DEFAULT_WRITE_VOLUME_UL: f64 = 20.0;

/// One binary vector and the analyte that encodes it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub analyte: AnalyteId,
    #[serde(serialize_with = "bits_out", deserialize_with = "bits_in")]
    pub bits: Vec<bool>,
}

fn bits_out<S: Serializer>(bits: &[bool], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(bits.iter().map(|&b| b as u8))
}

fn bits_in<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<bool>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Bit {
        Num(u8),
        Bool(bool),
    }
    let raw: Vec<Bit> = Vec::deserialize(d)?;
    raw.into_iter()
        .map(|b| match b {
            Bit::Num(0) | Bit::Bool(false) => Ok(false),
            Bit::Num(1) | Bit::Bool(true) => Ok(true),
            Bit::Num(n) => Err(serde::de::Error::custom(format!(
                "bit value {n} is not 0 or 1"
            ))),
        })
        .collect()
}

impl Dataset {
    pub fn new(analyte: AnalyteId, bits: Vec<bool>) -> Self {
        Self { analyte, bits }
    }

    /// Parses either a single JSON object or an array of them.
    pub fn parse_many(s: &str) -> Result<Vec<Dataset>> {
        let trimmed = s.trim_start();
        if trimmed.starts_with('[') {
            Ok(serde_json::from_str(s)?)
        } else {
            trimmed
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| serde_json::from_str(l).map_err(Error::from))
                .collect()
        }
    }
}

/// Reads a plain-text grid of `0`/`1` characters, row by row.
pub fn parse_grid(text: &str) -> Result<Vec<bool>> {
    let mut bits = Vec::new();
    let mut width = None;
    for line in text.lines() {
        let row: Vec<char> = line.chars().filter(|c| !c.is_whitespace()).collect();
        if row.is_empty() {
            continue;
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Parse(format!(
                    "grid rows differ in width ({w} vs {})",
                    row.len()
                )))
            }
            _ => {}
        }
        for c in row {
            match c {
                '0' => bits.push(false),
                '1' => bits.push(true),
                other => return Err(Error::Parse(format!("unexpected grid character {other:?}"))),
            }
        }
    }
    if bits.is_empty() {
        return Err(Error::EmptyInput("grid"));
    }
    Ok(bits)
}

pub fn format_grid(bits: &[bool], cols: usize) -> String {
    let mut out = String::with_capacity(bits.len() + bits.len() / cols.max(1));
    for row in bits.chunks(cols.max(1)) {
        out.extend(row.iter().map(|&b| if b { '1' } else { '0' }));
        out.push('\n');
    }
    out
}

/// Bit-index to well mapping plus write parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingPlan {
    pub dims: PlateDims,
    wells: Vec<WellAddress>,
    bias_well: Option<WellAddress>,
    pub write_volume_ul: f64,
    #[serde(default)]
    pub tip_policy: TipPolicy,
}

/// Row-major layout of `n_bits` wells in a block anchored at `A1`.
///
/// The block is as close to square as the plate allows, so a 16x16 image
/// keeps its geometry: bit `r * 16 + c` lands in row `r`, column `c`.
pub fn layout(n_bits: usize, dims: PlateDims) -> Result<EncodingPlan> {
    if n_bits > dims.n_wells() {
        return Err(Error::PlateTooSmall {
            n_bits,
            rows: dims.rows,
            cols: dims.cols,
        });
    }
    let square = (n_bits as f64).sqrt().ceil() as usize;
    let width = square.max(n_bits.div_ceil(dims.rows)).min(dims.cols).max(1);
    Ok(EncodingPlan {
        dims,
        wells: (0..n_bits)
            .map(|i| WellAddress::new(i / width, i % width))
            .collect(),
        bias_well: None,
        write_volume_ul: DEFAULT_WRITE_VOLUME_UL,
        tip_policy: TipPolicy::PerSource,
    })
}

impl EncodingPlan {
    pub fn n_bits(&self) -> usize {
        self.wells.len()
    }

    pub fn well(&self, bit: usize) -> WellAddress {
        self.wells[bit]
    }

    pub fn wells(&self) -> &[WellAddress] {
        &self.wells
    }

    pub fn bias_well(&self) -> Option<WellAddress> {
        self.bias_well
    }

    /// Reserves the first unused well (row-major over the whole plate) as
    /// the constant-1 feature.
    pub fn with_bias_well(mut self) -> Result<Self> {
        if self.bias_well.is_none() {
            let used: BTreeSet<WellAddress> = self.wells.iter().copied().collect();
            let addr = (0..self.dims.n_wells())
                .filter_map(|i| self.dims.address_of(i))
                .find(|a| !used.contains(a))
                .ok_or(Error::PlateTooSmall {
                    n_bits: self.wells.len() + 1,
                    rows: self.dims.rows,
                    cols: self.dims.cols,
                })?;
            self.bias_well = Some(addr);
        }
        Ok(self)
    }

    pub fn with_write_volume(mut self, volume_ul: f64) -> Self {
        self.write_volume_ul = volume_ul;
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let plan: EncodingPlan = serde_json::from_str(s)?;
        let unique: BTreeSet<_> = plan.wells.iter().chain(plan.bias_well.iter()).collect();
        if unique.len() != plan.wells.len() + plan.bias_well.is_some() as usize {
            return Err(Error::Parse("plan maps two bits to one well".into()));
        }
        if let Some(bad) = unique.iter().find(|a| !plan.dims.contains(***a)) {
            return Err(Error::OutOfBounds(**bad));
        }
        Ok(plan)
    }
}

fn check_datasets(datasets: &[Dataset], plan: &EncodingPlan) -> Result<()> {
    if datasets.is_empty() {
        return Err(Error::EmptyInput("datasets"));
    }
    let mut seen = BTreeSet::new();
    for d in datasets {
        if !seen.insert(d.analyte) {
            return Err(Error::AnalyteCollision(d.analyte));
        }
        if d.bits.len() != plan.n_bits() {
            return Err(Error::LengthMismatch {
                expected: plan.n_bits(),
                got: d.bits.len(),
            });
        }
    }
    Ok(())
}

/// Write-phase program: `M * N` transfers, plus one stock write per dataset
/// into the bias well when the plan has one.
///
/// Per dataset the stock writes come first, then the solvent writes, so the
/// per-source tip policy changes tips only twice per dataset.
pub fn emit_write_instructions(
    datasets: &[Dataset],
    plan: &EncodingPlan,
) -> Result<InstructionSequence> {
    check_datasets(datasets, plan)?;
    let mut seq = InstructionSequence::new("write");
    let v = plan.write_volume_ul;
    for d in datasets {
        let stock = Location::Stock(d.analyte);
        for (i, _) in d.bits.iter().enumerate().filter(|(_, &b)| b) {
            seq.push(Instruction::transfer(
                stock,
                Location::Data(plan.well(i)),
                v,
            )?);
        }
        if let Some(bias) = plan.bias_well() {
            seq.push(Instruction::transfer(stock, Location::Data(bias), v)?);
        }
        for (i, _) in d.bits.iter().enumerate().filter(|(_, &b)| !b) {
            seq.push(Instruction::transfer(
                Location::Solvent,
                Location::Data(plan.well(i)),
                v,
            )?);
        }
    }
    seq.assign_tips(plan.tip_policy);
    Ok(seq)
}

/// Concentration of analyte `m` in a well holding a `1` bit.
pub fn written_concentration(stock_mg_per_ml: f64, n_datasets: usize) -> f64 {
    stock_mg_per_ml / n_datasets as f64
}

/// Reads a dataset back by thresholding each well at half the `1` level.
pub fn decode(
    plate: &PlateState,
    plan: &EncodingPlan,
    analyte: AnalyteId,
    stock_mg_per_ml: f64,
    n_datasets: usize,
) -> Result<Vec<bool>> {
    let cut = written_concentration(stock_mg_per_ml, n_datasets) / 2.0;
    plan.wells()
        .iter()
        .map(|&w| Ok(plate.well(w).concentration(analyte)? > cut))
        .collect()
}

/// Declared chemical traits of an analyte.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyteTraits {
    pub miscible: bool,
    pub inert: bool,
}

impl Default for AnalyteTraits {
    fn default() -> Self {
        Self {
            miscible: true,
            inert: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CompatibilityConfig {
    /// Undeclared analytes are assumed compatible.
    pub traits: BTreeMap<AnalyteId, AnalyteTraits>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// Must dissolve in the chosen solvent.
    Miscible,
    /// Must be stable and not react with the other analytes.
    Inert,
    /// Must be measurable by the readout instrument.
    Quantifiable,
}

impl Criterion {
    pub fn number(&self) -> u8 {
        match self {
            Criterion::Miscible => 1,
            Criterion::Inert => 2,
            Criterion::Quantifiable => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub analyte: AnalyteId,
    pub criterion: Criterion,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ChemistryReport {
    pub violations: Vec<Violation>,
}

impl ChemistryReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every registered analyte against the three selection criteria.
pub fn validate_chemistry(
    registry: &AnalyteRegistry,
    compat: &CompatibilityConfig,
    profile: &HplcProfile,
) -> ChemistryReport {
    let mut report = ChemistryReport::default();
    for a in registry.iter() {
        let traits = compat.traits.get(&a.id).copied().unwrap_or_default();
        if !traits.miscible {
            report.violations.push(Violation {
                analyte: a.id,
                criterion: Criterion::Miscible,
                detail: format!("{} is not miscible in the solvent", a.name),
            });
        }
        if !traits.inert {
            report.violations.push(Violation {
                analyte: a.id,
                criterion: Criterion::Inert,
                detail: format!("{} is flagged reactive", a.name),
            });
        }
        if profile.peak(a.id).is_none() {
            report.violations.push(Violation {
                analyte: a.id,
                criterion: Criterion::Quantifiable,
                detail: format!("{} has no retention-time profile", a.name),
            });
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::Op;
    use crate::mixture::Deck;
    use crate::robot::{execute, NoiseModel};

    #[test]
    fn layout_full_image() {
        let plan = layout(256, PlateDims::WELLS_384).unwrap();
        let unique: BTreeSet<_> = plan.wells().iter().collect();
        assert_eq!(unique.len(), 256);
        // enumerate the expected block independently
        let mut expected = Vec::new();
        for row in 0..16 {
            for col in 0..16 {
                expected.push(WellAddress::new(row, col));
            }
        }
        assert_eq!(plan.wells(), &expected[..]);
        let plan = plan.with_bias_well().unwrap();
        assert_eq!(plan.bias_well(), Some(WellAddress::new(0, 16)));
    }

    #[test]
    fn layout_edges() {
        assert_eq!(
            layout(1, PlateDims::WELLS_384).unwrap().well(0),
            WellAddress::new(0, 0)
        );
        assert_eq!(
            layout(385, PlateDims::WELLS_384).unwrap_err(),
            Error::PlateTooSmall {
                n_bits: 385,
                rows: 16,
                cols: 24
            }
        );
        let full = layout(384, PlateDims::WELLS_384).unwrap();
        assert_eq!(full.well(383), WellAddress::new(15, 23));
        assert!(full.with_bias_well().is_err());
        let v = layout(16, PlateDims::WELLS_384).unwrap();
        assert_eq!(v.well(5), WellAddress::new(1, 1));
    }

    #[test]
    fn single_dataset_writes() {
        let plan = layout(2, PlateDims::WELLS_384).unwrap();
        let seq = emit_write_instructions(&[Dataset::new(AnalyteId(1), vec![true, false])], &plan)
            .unwrap();
        assert_eq!(seq.len(), 2);
        assert_eq!(seq.instructions[0].op, Op::TransferStock);
        assert_eq!(
            seq.instructions[0].dst,
            Location::Data(WellAddress::new(0, 0))
        );
        assert_eq!(seq.instructions[1].op, Op::TransferSolvent);
        assert_eq!(
            seq.instructions[1].dst,
            Location::Data(WellAddress::new(0, 1))
        );
        assert!(seq.iter().all(|i| i.volume_ul == 20.0));
    }

    #[test]
    fn three_overlaid_images() {
        let plan = layout(256, PlateDims::WELLS_384).unwrap();
        let datasets: Vec<Dataset> = (0..3u16)
            .map(|m| {
                Dataset::new(
                    AnalyteId(m + 1),
                    (0..256).map(|i| (i * (m as usize + 3)) % 7 < 3).collect(),
                )
            })
            .collect();
        let seq = emit_write_instructions(&datasets, &plan).unwrap();
        assert_eq!(seq.len(), 768);
        let deck = Deck::standard(AnalyteRegistry::phenols());
        let (deck, _) = execute(&seq, &deck, &NoiseModel::disabled(), 0).unwrap();
        for &w in plan.wells() {
            assert!((deck.data.well(w).volume_ul() - 60.0).abs() < 1e-9);
        }
        let c1 = written_concentration(62.5, 3);
        assert!((c1 - 20.833333333333332).abs() < 1e-12);
        for d in &datasets {
            let got = decode(&deck.data, &plan, d.analyte, 62.5, 3).unwrap();
            assert_eq!(got, d.bits);
            let i = d.bits.iter().position(|b| *b).unwrap();
            let c = deck
                .data
                .well(plan.well(i))
                .concentration(d.analyte)
                .unwrap();
            assert!((c - 62.5 * 20.0 / 60.0).abs() < 1e-9);
        }
    }

    #[test]
    fn write_errors() {
        let plan = layout(2, PlateDims::WELLS_384).unwrap();
        let a = Dataset::new(AnalyteId(1), vec![true, false]);
        assert_eq!(
            emit_write_instructions(&[a.clone(), a.clone()], &plan).unwrap_err(),
            Error::AnalyteCollision(AnalyteId(1))
        );
        let short = Dataset::new(AnalyteId(2), vec![true]);
        assert_eq!(
            emit_write_instructions(&[a, short], &plan)
                .unwrap_err()
                .kind(),
            "LengthMismatch"
        );
        assert!(emit_write_instructions(&[], &plan).is_err());
    }

    #[test]
    fn bias_well_gets_stock_from_every_dataset() {
        let plan = layout(2, PlateDims::WELLS_384)
            .unwrap()
            .with_bias_well()
            .unwrap();
        let ds = [
            Dataset::new(AnalyteId(1), vec![false, false]),
            Dataset::new(AnalyteId(2), vec![true, false]),
        ];
        let seq = emit_write_instructions(&ds, &plan).unwrap();
        assert_eq!(seq.len(), 2 * 2 + 2);
        let bias = Location::Data(plan.bias_well().unwrap());
        assert_eq!(
            seq.iter()
                .filter(|i| i.dst == bias && i.op == Op::TransferStock)
                .count(),
            2
        );
    }

    #[test]
    fn dataset_json_forms() {
        let one = r#"{"analyte": 2, "bits": [0,1,1]}"#;
        let ds = Dataset::parse_many(one).unwrap();
        assert_eq!(
            ds,
            vec![Dataset::new(AnalyteId(2), vec![false, true, true])]
        );
        let many = r#"[{"analyte":1,"bits":[1]},{"analyte":3,"bits":[true]}]"#;
        assert_eq!(Dataset::parse_many(many).unwrap().len(), 2);
        assert!(Dataset::parse_many(r#"{"analyte":1,"bits":[2]}"#).is_err());
        let text = serde_json::to_string(&ds[0]).unwrap();
        assert_eq!(text, r#"{"analyte":2,"bits":[0,1,1]}"#);
    }

    #[test]
    fn grid_round_trip() {
        let text = "0110\n1001\n";
        let bits = parse_grid(text).unwrap();
        assert_eq!(bits.len(), 8);
        assert_eq!(format_grid(&bits, 4), text);
        assert!(parse_grid("01\n011\n").is_err());
        assert!(parse_grid("0x\n").is_err());
        assert!(parse_grid("\n").is_err());
    }

    #[test]
    fn chemistry_checks() {
        let reg = AnalyteRegistry::phenols();
        let profile = HplcProfile::phenols();
        assert!(validate_chemistry(&reg, &CompatibilityConfig::default(), &profile).ok());

        let mut compat = CompatibilityConfig::default();
        compat.traits.insert(
            AnalyteId(2),
            AnalyteTraits {
                miscible: true,
                inert: false,
            },
        );
        let r = validate_chemistry(&reg, &compat, &profile);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].criterion.number(), 2);

        let partial =
            HplcProfile::new(vec![profile.peaks()[0].clone(), profile.peaks()[1].clone()]).unwrap();
        let r = validate_chemistry(&reg, &CompatibilityConfig::default(), &partial);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].analyte, AnalyteId(3));
        assert_eq!(r.violations[0].criterion, Criterion::Quantifiable);
    }

    #[test]
    fn plan_json_round_trip() {
        let plan = layout(5, PlateDims::WELLS_384)
            .unwrap()
            .with_bias_well()
            .unwrap();
        assert_eq!(EncodingPlan::from_json(&plan.to_json()).unwrap(), plan);
    }
}
