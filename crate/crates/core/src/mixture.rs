//! Plates, wells and solutions with exact mass/volume bookkeeping.
//!
//! Solutions carry extensive quantities only: a volume in microlitres and a
//! mass in milligrams per analyte. Concentrations (mg/mL) are derived on
//! demand, so repeated splitting and pooling never accumulates concentration
//! drift. Mixing is perfect and instantaneous and analytes never interact,
//! which makes every pooling step an exact weighted average:
//!
//! ```text
//! C_f = sum_i (V_i / V_f) * C_i
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Volumes within this many microlitres of each other are treated as equal
/// when deciding whether a draw exhausts a well.
pub const VOLUME_EPS_UL: f64 = 1e-9;

/// Default stock concentration for every analyte, mg/mL.
pub const DEFAULT_STOCK_MG_PER_ML: f64 = 62.5;

/// Working capacity of one well of a 384-well plate.
pub const DEFAULT_WELL_CAPACITY_UL: f64 = 120.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnalyteId(pub u16);

impl fmt::Display for AnalyteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analyte {
    pub id: AnalyteId,
    pub name: String,
    pub stock_mg_per_ml: f64,
}

/// Set of analytes available for encoding, keyed by id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnalyteRegistry {
    analytes: Vec<Analyte>,
}

impl AnalyteRegistry {
    pub fn new(analytes: Vec<Analyte>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for a in &analytes {
            if !seen.insert(a.id) {
                return Err(Error::AnalyteCollision(a.id));
            }
            if !(a.stock_mg_per_ml > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "analyte {} has non-positive stock concentration",
                    a.id
                )));
            }
        }
        Ok(Self { analytes })
    }

    /// The three phenols used as data carriers: 2,4,6-tri-tert-butylphenol,
    /// 2,6-dimethylphenol and 4-nitrophenol, each at 62.5 mg/mL in DMSO.
    pub fn phenols() -> Self {
        let names = [
            "2,4,6-tri-tert-butylphenol",
            "2,6-dimethylphenol",
            "4-nitrophenol",
        ];
        let analytes = names
            .iter()
            .enumerate()
            .map(|(i, name)| Analyte {
                id: AnalyteId(i as u16 + 1),
                name: (*name).to_string(),
                stock_mg_per_ml: DEFAULT_STOCK_MG_PER_ML,
            })
            .collect();
        Self { analytes }
    }

    pub fn get(&self, id: AnalyteId) -> Result<&Analyte> {
        self.analytes
            .iter()
            .find(|a| a.id == id)
            .ok_or(Error::UnknownAnalyte(id))
    }

    pub fn ids(&self) -> Vec<AnalyteId> {
        self.analytes.iter().map(|a| a.id).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Analyte> {
        self.analytes.iter()
    }

    pub fn len(&self) -> usize {
        self.analytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.analytes.is_empty()
    }
}

/// A liquid volume with the dissolved mass of each analyte.
///
/// Invariants: volume and masses are non-negative, and an empty solution
/// carries no mass.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SolutionState {
    volume_ul: f64,
    masses_mg: BTreeMap<AnalyteId, f64>,
}

impl SolutionState {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Pure solvent; solvent itself is not tracked as an analyte.
    pub fn solvent(volume_ul: f64) -> Self {
        Self {
            volume_ul: volume_ul.max(0.0),
            masses_mg: BTreeMap::new(),
        }
    }

    /// Builds a solution from concentrations in mg/mL.
    pub fn from_concentrations(volume_ul: f64, conc: &[(AnalyteId, f64)]) -> Self {
        let volume_ul = volume_ul.max(0.0);
        let masses_mg = conc
            .iter()
            .filter(|(_, c)| *c > 0.0 && volume_ul > 0.0)
            .map(|&(id, c)| (id, c * volume_ul / 1000.0))
            .collect();
        Self {
            volume_ul,
            masses_mg,
        }
    }

    /// Builds a solution from raw masses. Negative inputs are clamped to zero.
    pub fn from_masses(volume_ul: f64, masses: &[(AnalyteId, f64)]) -> Self {
        let volume_ul = volume_ul.max(0.0);
        let masses_mg = if volume_ul > 0.0 {
            masses
                .iter()
                .filter(|(_, m)| *m > 0.0)
                .map(|&(id, m)| (id, m))
                .collect()
        } else {
            BTreeMap::new()
        };
        Self {
            volume_ul,
            masses_mg,
        }
    }

    pub fn volume_ul(&self) -> f64 {
        self.volume_ul
    }

    pub fn mass_mg(&self, id: AnalyteId) -> f64 {
        self.masses_mg.get(&id).copied().unwrap_or(0.0)
    }

    pub fn masses(&self) -> &BTreeMap<AnalyteId, f64> {
        &self.masses_mg
    }

    pub fn is_empty(&self) -> bool {
        self.volume_ul <= 0.0
    }

    /// Concentration in mg/mL; zero for an absent analyte.
    pub fn concentration(&self, id: AnalyteId) -> Result<f64> {
        if self.volume_ul <= 0.0 {
            return Err(Error::EmptySolution);
        }
        Ok(self.mass_mg(id) / (self.volume_ul / 1000.0))
    }

    /// Removes `volume_ul` at the current composition and returns it.
    ///
    /// A request within [`VOLUME_EPS_UL`] of the full volume takes
    /// everything, leaving an exact zero.
    pub fn split_off(&mut self, volume_ul: f64) -> Option<SolutionState> {
        if volume_ul <= 0.0 {
            return Some(SolutionState::empty());
        }
        if volume_ul > self.volume_ul + VOLUME_EPS_UL {
            return None;
        }
        if volume_ul >= self.volume_ul - VOLUME_EPS_UL {
            return Some(std::mem::take(self));
        }
        let fraction = volume_ul / self.volume_ul;
        let mut aliquot = BTreeMap::new();
        for (id, mass) in self.masses_mg.iter_mut() {
            let taken = *mass * fraction;
            *mass -= taken;
            if *mass < 0.0 {
                *mass = 0.0;
            }
            aliquot.insert(*id, taken);
        }
        self.volume_ul -= volume_ul;
        Some(SolutionState {
            volume_ul,
            masses_mg: aliquot,
        })
    }

    /// Pools `other` into this solution.
    pub fn absorb(&mut self, other: SolutionState) {
        if other.volume_ul <= 0.0 && other.masses_mg.is_empty() {
            return;
        }
        self.volume_ul += other.volume_ul;
        for (id, mass) in other.masses_mg {
            *self.masses_mg.entry(id).or_insert(0.0) += mass;
        }
    }
}

/// 0-based plate coordinate. Displays as the usual row-letter/column-number
/// label (`A1`, `P24`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WellAddress {
    pub row: usize,
    pub col: usize,
}

impl WellAddress {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

fn row_label(mut row: usize) -> String {
    let mut out = Vec::new();
    loop {
        out.push(b'A' + (row % 26) as u8);
        if row < 26 {
            break;
        }
        row = row / 26 - 1;
    }
    out.reverse();
    String::from_utf8(out).unwrap()
}

impl fmt::Display for WellAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", row_label(self.row), self.col + 1)
    }
}

impl FromStr for WellAddress {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let split = s
            .find(|c: char| c.is_ascii_digit())
            .ok_or_else(|| Error::Parse(format!("bad well label {s:?}")))?;
        let (letters, digits) = s.split_at(split);
        if letters.is_empty() || !letters.bytes().all(|b| b.is_ascii_uppercase()) {
            return Err(Error::Parse(format!("bad well label {s:?}")));
        }
        let mut row = 0usize;
        for b in letters.bytes() {
            row = row * 26 + (b - b'A') as usize + 1;
        }
        let col: usize = digits
            .parse()
            .map_err(|_| Error::Parse(format!("bad well label {s:?}")))?;
        if col == 0 {
            return Err(Error::Parse(format!("bad well label {s:?}")));
        }
        Ok(WellAddress::new(row - 1, col - 1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlateDims {
    pub rows: usize,
    pub cols: usize,
}

impl PlateDims {
    pub const WELLS_384: PlateDims = PlateDims { rows: 16, cols: 24 };
    pub const WELLS_96: PlateDims = PlateDims { rows: 8, cols: 12 };

    pub fn n_wells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn contains(&self, addr: WellAddress) -> bool {
        addr.row < self.rows && addr.col < self.cols
    }

    /// Row-major address of the `index`-th well.
    pub fn address_of(&self, index: usize) -> Option<WellAddress> {
        (index < self.n_wells()).then(|| WellAddress::new(index / self.cols, index % self.cols))
    }
}

impl Default for PlateDims {
    fn default() -> Self {
        Self::WELLS_384
    }
}

/// A grid of isolated wells plus a waste reservoir for discarded liquid.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateState {
    dims: PlateDims,
    capacity_ul: f64,
    wells: BTreeMap<WellAddress, SolutionState>,
    waste: SolutionState,
}

static EMPTY: SolutionState = SolutionState {
    volume_ul: 0.0,
    masses_mg: BTreeMap::new(),
};

impl PlateState {
    pub fn new(dims: PlateDims) -> Self {
        Self::with_capacity(dims, DEFAULT_WELL_CAPACITY_UL)
    }

    pub fn with_capacity(dims: PlateDims, capacity_ul: f64) -> Self {
        Self {
            dims,
            capacity_ul,
            wells: BTreeMap::new(),
            waste: SolutionState::empty(),
        }
    }

    pub fn dims(&self) -> PlateDims {
        self.dims
    }

    pub fn capacity_ul(&self) -> f64 {
        self.capacity_ul
    }

    fn check(&self, addr: WellAddress) -> Result<()> {
        if self.dims.contains(addr) {
            Ok(())
        } else {
            Err(Error::OutOfBounds(addr))
        }
    }

    pub fn well(&self, addr: WellAddress) -> &SolutionState {
        self.wells.get(&addr).unwrap_or(&EMPTY)
    }

    pub fn waste(&self) -> &SolutionState {
        &self.waste
    }

    /// Replaces a well's contents outright (plate setup, not a transfer).
    pub fn set_well(&mut self, addr: WellAddress, sol: SolutionState) -> Result<()> {
        self.check(addr)?;
        if sol.volume_ul > self.capacity_ul + VOLUME_EPS_UL {
            return Err(Error::WellOverflow {
                well: addr,
                would_hold_ul: sol.volume_ul,
                capacity_ul: self.capacity_ul,
            });
        }
        if sol.is_empty() {
            self.wells.remove(&addr);
        } else {
            self.wells.insert(addr, sol);
        }
        Ok(())
    }

    /// Non-empty wells in row-major order.
    pub fn occupied(&self) -> impl Iterator<Item = (WellAddress, &SolutionState)> {
        self.wells.iter().map(|(a, s)| (*a, s))
    }

    /// Draws `volume_ul` from a well at its current composition.
    pub fn aspirate(&mut self, from: WellAddress, volume_ul: f64) -> Result<SolutionState> {
        self.check(from)?;
        if volume_ul <= 0.0 {
            return Ok(SolutionState::empty());
        }
        let available = self.well(from).volume_ul;
        let well = self.wells.entry(from).or_default();
        let aliquot = well.split_off(volume_ul).ok_or(Error::InsufficientVolume {
            well: from,
            available_ul: available,
            requested_ul: volume_ul,
        })?;
        if well.is_empty() {
            self.wells.remove(&from);
        }
        Ok(aliquot)
    }

    pub fn dispense(&mut self, to: WellAddress, aliquot: SolutionState) -> Result<()> {
        self.check(to)?;
        let would_hold = self.well(to).volume_ul + aliquot.volume_ul;
        if would_hold > self.capacity_ul + VOLUME_EPS_UL {
            return Err(Error::WellOverflow {
                well: to,
                would_hold_ul: would_hold,
                capacity_ul: self.capacity_ul,
            });
        }
        if aliquot.volume_ul <= 0.0 && aliquot.masses_mg.is_empty() {
            return Ok(());
        }
        self.wells.entry(to).or_default().absorb(aliquot);
        Ok(())
    }

    /// Moves liquid from a well into the waste reservoir.
    pub fn discard(&mut self, from: WellAddress, volume_ul: f64) -> Result<()> {
        let aliquot = self.aspirate(from, volume_ul)?;
        self.waste.absorb(aliquot);
        Ok(())
    }

    pub fn discard_aliquot(&mut self, aliquot: SolutionState) {
        self.waste.absorb(aliquot);
    }

    /// Mass of `id` across every well and the waste reservoir.
    pub fn total_mass_mg(&self, id: AnalyteId) -> f64 {
        self.wells.values().map(|w| w.mass_mg(id)).sum::<f64>() + self.waste.mass_mg(id)
    }

    pub fn total_volume_ul(&self) -> f64 {
        self.wells.values().map(|w| w.volume_ul).sum::<f64>() + self.waste.volume_ul
    }

    pub fn analytes(&self) -> Vec<AnalyteId> {
        let mut ids: Vec<AnalyteId> = self
            .wells
            .values()
            .chain(std::iter::once(&self.waste))
            .flat_map(|w| w.masses_mg.keys().copied())
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&PlateSnapshot::from(self)).expect("plate snapshot serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let snap: PlateSnapshot = serde_json::from_str(s)?;
        snap.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct WellRecord {
    row: usize,
    col: usize,
    volume_ul: f64,
    masses_mg: BTreeMap<AnalyteId, f64>,
}

#[derive(Serialize, Deserialize)]
struct PlateSnapshot {
    dims: PlateDims,
    #[serde(default = "default_capacity")]
    capacity_ul: f64,
    wells: Vec<WellRecord>,
    #[serde(default)]
    waste: SolutionState,
}

fn default_capacity() -> f64 {
    DEFAULT_WELL_CAPACITY_UL
}

impl From<&PlateState> for PlateSnapshot {
    fn from(p: &PlateState) -> Self {
        PlateSnapshot {
            dims: p.dims,
            capacity_ul: p.capacity_ul,
            wells: p
                .wells
                .iter()
                .map(|(a, s)| WellRecord {
                    row: a.row,
                    col: a.col,
                    volume_ul: s.volume_ul,
                    masses_mg: s.masses_mg.clone(),
                })
                .collect(),
            waste: p.waste.clone(),
        }
    }
}

impl TryFrom<PlateSnapshot> for PlateState {
    type Error = Error;

    fn try_from(s: PlateSnapshot) -> Result<Self> {
        let mut plate = PlateState::with_capacity(s.dims, s.capacity_ul);
        for w in s.wells {
            if w.volume_ul < 0.0 || w.masses_mg.values().any(|m| *m < 0.0) {
                return Err(Error::Parse("negative volume or mass in snapshot".into()));
            }
            let sol = SolutionState {
                volume_ul: w.volume_ul,
                masses_mg: w.masses_mg,
            };
            plate.set_well(WellAddress::new(w.row, w.col), sol)?;
        }
        plate.waste = s.waste;
        Ok(plate)
    }
}

/// Where a transfer draws from or delivers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Location {
    /// A well of the data plate.
    Data(WellAddress),
    /// A well of the output (pool) plate.
    Output(WellAddress),
    /// Stock reservoir of one analyte; never runs dry.
    Stock(AnalyteId),
    /// Pure solvent reservoir; never runs dry.
    Solvent,
}

impl Location {
    pub fn is_reservoir(&self) -> bool {
        matches!(self, Location::Stock(_) | Location::Solvent)
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Data(a) => write!(f, "{a}"),
            Location::Output(a) => write!(f, "out:{a}"),
            Location::Stock(id) => write!(f, "stock:{id}"),
            Location::Solvent => write!(f, "solvent"),
        }
    }
}

impl FromStr for Location {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "solvent" {
            Ok(Location::Solvent)
        } else if let Some(id) = s.strip_prefix("stock:") {
            let id: u16 = id
                .parse()
                .map_err(|_| Error::Parse(format!("bad stock id in {s:?}")))?;
            Ok(Location::Stock(AnalyteId(id)))
        } else if let Some(w) = s.strip_prefix("out:") {
            Ok(Location::Output(w.parse()?))
        } else {
            Ok(Location::Data(s.parse()?))
        }
    }
}

/// Robot deck: the data plate, the output plate receiving pools, and the
/// reservoirs. Tracks how much analyte mass the stock reservoirs have
/// introduced so global accounting closes.
#[derive(Debug, Clone, PartialEq)]
pub struct Deck {
    pub registry: AnalyteRegistry,
    pub data: PlateState,
    pub output: PlateState,
    introduced_mg: BTreeMap<AnalyteId, f64>,
}

/// Output plate default: a 96-position deep-well plate.
pub const DEFAULT_OUTPUT_CAPACITY_UL: f64 = 2000.0;

impl Deck {
    pub fn new(registry: AnalyteRegistry, data: PlateState, output: PlateState) -> Self {
        Self {
            registry,
            data,
            output,
            introduced_mg: BTreeMap::new(),
        }
    }

    /// 384-well data plate and a deep-well 96 output plate.
    pub fn standard(registry: AnalyteRegistry) -> Self {
        Self::new(
            registry,
            PlateState::new(PlateDims::WELLS_384),
            PlateState::with_capacity(PlateDims::WELLS_96, DEFAULT_OUTPUT_CAPACITY_UL),
        )
    }

    pub fn solution(&self, loc: Location) -> Result<&SolutionState> {
        match loc {
            Location::Data(a) => Ok(self.data.well(a)),
            Location::Output(a) => Ok(self.output.well(a)),
            other => Err(Error::BadLocation(other)),
        }
    }

    /// Volume that can be drawn from `loc`; reservoirs are unbounded.
    pub fn available_ul(&self, loc: Location) -> f64 {
        match loc {
            Location::Data(a) => self.data.well(a).volume_ul(),
            Location::Output(a) => self.output.well(a).volume_ul(),
            Location::Stock(_) | Location::Solvent => f64::INFINITY,
        }
    }

    pub fn draw(&mut self, from: Location, volume_ul: f64) -> Result<SolutionState> {
        match from {
            Location::Data(a) => self.data.aspirate(a, volume_ul),
            Location::Output(a) => self.output.aspirate(a, volume_ul),
            Location::Stock(id) => {
                let stock = self.registry.get(id)?.stock_mg_per_ml;
                let sol = SolutionState::from_concentrations(volume_ul, &[(id, stock)]);
                *self.introduced_mg.entry(id).or_insert(0.0) += sol.mass_mg(id);
                Ok(sol)
            }
            Location::Solvent => Ok(SolutionState::solvent(volume_ul)),
        }
    }

    pub fn deposit(&mut self, to: Location, aliquot: SolutionState) -> Result<()> {
        match to {
            Location::Data(a) => self.data.dispense(a, aliquot),
            Location::Output(a) => self.output.dispense(a, aliquot),
            other => Err(Error::BadLocation(other)),
        }
    }

    /// Draw then deposit, as one pipetting step. Returns the moved volume.
    pub fn transfer(&mut self, from: Location, to: Location, volume_ul: f64) -> Result<f64> {
        if to.is_reservoir() {
            return Err(Error::BadLocation(to));
        }
        let aliquot = self.draw(from, volume_ul)?;
        let moved = aliquot.volume_ul();
        self.deposit(to, aliquot)?;
        Ok(moved)
    }

    /// Mass of `id` on both plates including waste.
    pub fn total_mass_mg(&self, id: AnalyteId) -> f64 {
        self.data.total_mass_mg(id) + self.output.total_mass_mg(id)
    }

    /// Mass of `id` that entered the deck from its stock reservoir.
    pub fn introduced_mg(&self, id: AnalyteId) -> f64 {
        self.introduced_mg.get(&id).copied().unwrap_or(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const A1: AnalyteId = AnalyteId(1);

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn aspirate_is_proportional() {
        let mut plate = PlateState::new(PlateDims::WELLS_384);
        let w = WellAddress::new(0, 0);
        plate
            .set_well(w, SolutionState::from_masses(60.0, &[(A1, 1.25)]))
            .unwrap();
        let aliquot = plate.aspirate(w, 6.0).unwrap();
        assert_eq!(aliquot.volume_ul(), 6.0);
        assert!(close(aliquot.mass_mg(A1), 0.125));
        assert!(close(plate.well(w).volume_ul(), 54.0));
        assert!(close(plate.well(w).mass_mg(A1), 1.125));
    }

    #[test]
    fn aspirate_zero_is_identity() {
        let mut plate = PlateState::new(PlateDims::WELLS_384);
        let w = WellAddress::new(2, 3);
        let sol = SolutionState::from_masses(60.0, &[(A1, 1.25)]);
        plate.set_well(w, sol.clone()).unwrap();
        let aliquot = plate.aspirate(w, 0.0).unwrap();
        assert!(aliquot.is_empty());
        assert_eq!(aliquot.masses().len(), 0);
        assert_eq!(plate.well(w), &sol);
    }

    #[test]
    fn aspirate_everything_exhausts() {
        let mut plate = PlateState::new(PlateDims::WELLS_384);
        let w = WellAddress::new(0, 1);
        plate
            .set_well(w, SolutionState::from_masses(20.0, &[(A1, 0.7)]))
            .unwrap();
        let aliquot = plate.aspirate(w, 20.0).unwrap();
        assert_eq!(aliquot.mass_mg(A1), 0.7);
        assert_eq!(plate.well(w).volume_ul(), 0.0);
        assert_eq!(plate.well(w).mass_mg(A1), 0.0);
    }

    #[test]
    fn aspirate_too_much_fails() {
        let mut plate = PlateState::new(PlateDims::WELLS_384);
        let w = WellAddress::new(0, 0);
        plate.set_well(w, SolutionState::solvent(10.0)).unwrap();
        let err = plate.aspirate(w, 10.5).unwrap_err();
        assert_eq!(err.kind(), "InsufficientVolume");
        assert_eq!(plate.well(w).volume_ul(), 10.0);
    }

    #[test]
    fn dispense_dilutes_two_to_one() {
        let mut plate = PlateState::new(PlateDims::WELLS_384);
        let w = WellAddress::new(1, 1);
        plate
            .set_well(w, SolutionState::from_concentrations(10.0, &[(A1, 2.0)]))
            .unwrap();
        plate.dispense(w, SolutionState::solvent(10.0)).unwrap();
        assert_eq!(plate.well(w).volume_ul(), 20.0);
        assert!(close(plate.well(w).concentration(A1).unwrap(), 1.0));
    }

    #[test]
    fn dispense_empty_is_identity() {
        let mut plate = PlateState::new(PlateDims::WELLS_384);
        let w = WellAddress::new(1, 1);
        let sol = SolutionState::from_concentrations(10.0, &[(A1, 2.0)]);
        plate.set_well(w, sol.clone()).unwrap();
        plate.dispense(w, SolutionState::empty()).unwrap();
        assert_eq!(plate.well(w), &sol);
    }

    #[test]
    fn dispense_overflow() {
        let mut plate = PlateState::new(PlateDims::WELLS_384);
        let w = WellAddress::new(0, 0);
        plate.set_well(w, SolutionState::solvent(100.0)).unwrap();
        let err = plate.dispense(w, SolutionState::solvent(30.0)).unwrap_err();
        assert_eq!(err.kind(), "WellOverflow");
    }

    #[test]
    fn pooling_matches_weighted_average() {
        // independent ledger: total mass / total volume
        let draws = [(3.0, 20.8), (1.5, 0.0), (6.25, 7.0), (0.5, 62.5)];
        let mut plate = PlateState::with_capacity(PlateDims::WELLS_96, 1000.0);
        let dest = WellAddress::new(7, 11);
        for (i, &(v, c)) in draws.iter().enumerate() {
            let src = WellAddress::new(0, i);
            plate
                .set_well(src, SolutionState::from_concentrations(60.0, &[(A1, c)]))
                .unwrap();
            let aliquot = plate.aspirate(src, v).unwrap();
            plate.dispense(dest, aliquot).unwrap();
        }
        let vf: f64 = draws.iter().map(|d| d.0).sum();
        let expected: f64 = draws.iter().map(|&(v, c)| v / vf * c).sum();
        assert!(close(plate.well(dest).concentration(A1).unwrap(), expected));
    }

    #[test]
    fn concentration_examples() {
        let s = SolutionState::from_masses(20.0, &[(A1, 0.4)]);
        assert!(close(s.concentration(A1).unwrap(), 20.0));
        let blank = SolutionState::solvent(60.0);
        assert_eq!(blank.concentration(A1).unwrap(), 0.0);
        assert_eq!(
            SolutionState::empty().concentration(A1).unwrap_err(),
            Error::EmptySolution
        );
    }

    #[test]
    fn serial_dilution_chain() {
        let mut sol = SolutionState::from_concentrations(20.0, &[(A1, 6.0)]);
        for _ in 0..10 {
            let mut next = sol.split_off(10.0).unwrap();
            next.absorb(SolutionState::solvent(10.0));
            sol = next;
        }
        let c = sol.concentration(A1).unwrap();
        assert!(close(c, 6.0 / 1024.0));
        assert!((c - 0.00586).abs() < 1e-5);
    }

    #[test]
    fn discard_goes_to_waste() {
        let mut plate = PlateState::new(PlateDims::WELLS_384);
        let w = WellAddress::new(0, 0);
        plate
            .set_well(w, SolutionState::from_masses(40.0, &[(A1, 1.0)]))
            .unwrap();
        plate.discard(w, 10.0).unwrap();
        assert!(close(plate.waste().mass_mg(A1), 0.25));
        assert!(close(plate.total_mass_mg(A1), 1.0));
        assert!(close(plate.total_volume_ul(), 40.0));
    }

    #[test]
    fn well_labels_round_trip() {
        for (addr, label) in [
            (WellAddress::new(0, 0), "A1"),
            (WellAddress::new(15, 23), "P24"),
            (WellAddress::new(26, 4), "AA5"),
        ] {
            assert_eq!(addr.to_string(), label);
            assert_eq!(label.parse::<WellAddress>().unwrap(), addr);
        }
        assert!("1A".parse::<WellAddress>().is_err());
        assert!("A0".parse::<WellAddress>().is_err());
    }

    #[test]
    fn location_labels_round_trip() {
        for loc in [
            Location::Data(WellAddress::new(3, 4)),
            Location::Output(WellAddress::new(0, 1)),
            Location::Stock(AnalyteId(2)),
            Location::Solvent,
        ] {
            assert_eq!(loc.to_string().parse::<Location>().unwrap(), loc);
        }
    }

    #[test]
    fn out_of_bounds_rejected() {
        let mut plate = PlateState::new(PlateDims::WELLS_96);
        let err = plate
            .dispense(WellAddress::new(8, 0), SolutionState::solvent(1.0))
            .unwrap_err();
        assert_eq!(err.kind(), "OutOfBounds");
    }

    #[test]
    fn registry_rejects_duplicates() {
        let a = Analyte {
            id: A1,
            name: "x".into(),
            stock_mg_per_ml: 1.0,
        };
        assert!(AnalyteRegistry::new(vec![a.clone(), a]).is_err());
    }

    #[test]
    fn deck_tracks_stock_mass() {
        let mut deck = Deck::standard(AnalyteRegistry::phenols());
        let dst = Location::Data(WellAddress::new(0, 0));
        deck.transfer(Location::Stock(A1), dst, 20.0).unwrap();
        deck.transfer(Location::Solvent, dst, 40.0).unwrap();
        assert!(close(deck.introduced_mg(A1), 1.25));
        assert!(close(deck.total_mass_mg(A1), 1.25));
        assert!(close(
            deck.solution(dst).unwrap().concentration(A1).unwrap(),
            62.5 * 20.0 / 60.0
        ));
        assert!(deck.transfer(dst, Location::Solvent, 1.0).is_err());
    }
}
